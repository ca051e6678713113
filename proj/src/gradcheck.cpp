#include "kepler/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "kepler/rng.hpp"

namespace kepler {

double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(ParameterSet& params,
                                  const std::function<double()>& loss_fn,
                                  const std::function<void()>& compute_grads,
                                  double step, int checks_per_param, std::uint64_t seed) {
    params.zero_grads();
    compute_grads();

    GradCheckReport report;
    Rng rng(seed);
    for (int s = 0; s < params.count(); ++s) {
        Param& p = params.at(s);
        const std::int64_t n = p.value.size();
        if (n == 0) continue;

        // sample distinct component indices
        std::vector<std::int64_t> picks;
        if (n <= checks_per_param) {
            for (std::int64_t i = 0; i < n; ++i) picks.push_back(i);
        } else {
            for (int i = 0; i < checks_per_param; ++i)
                picks.push_back(static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n))));
            std::sort(picks.begin(), picks.end());
            picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
        }

        for (std::int64_t i : picks) {
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double lp = loss_fn();
            p.value[i] = saved - step;
            const double lm = loss_fn();
            p.value[i] = saved;

            const double numeric = (lp - lm) / (2.0 * step);
            const double err = grad_rel_err(p.grad[i], numeric);
            ++report.checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = p.name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

} // namespace kepler
