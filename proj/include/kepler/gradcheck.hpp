#pragma once
// Central finite-difference verification of analytic gradients. The numeric
// side only ever calls the forward closure, so it is independent of the
// backward pass it checks.

#include <cstdint>
#include <functional>
#include <string>

#include "kepler/tape.hpp"

namespace kepler {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    int checked = 0;
    bool passed(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// |a - n| / max(1, |a|, |n|): relative for O(1)-and-larger gradients,
// absolute below that, which matches the truncation floor of a central
// difference at the given step.
double grad_rel_err(double analytic, double numeric);

// loss_fn evaluates the scalar loss at the current parameter values
// (deterministically, forward only). compute_grads must leave d loss / d p
// in every parameter's grad field. Checks up to checks_per_param randomly
// chosen components of each parameter. Failures are reported, never thrown.
GradCheckReport finite_diff_check(ParameterSet& params,
                                  const std::function<double()>& loss_fn,
                                  const std::function<void()>& compute_grads,
                                  double step = 1e-4,
                                  int checks_per_param = 8,
                                  std::uint64_t seed = 0);

} // namespace kepler
