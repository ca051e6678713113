#pragma once
// Adaptive-moment optimizer with optional linear warmup.

#include <cstdint>
#include <string>

#include "kepler/tape.hpp"

namespace kepler {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
    // Steps of linear warmup from 0 to lr; 0 disables the schedule.
    std::int64_t warmup_steps = 0;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

    // Applies one update from the accumulated gradients, clears them, and
    // re-quantizes parameter storage. Throws on any non-finite gradient.
    void step(ParameterSet& params);

    std::int64_t steps_taken() const { return step_; }
    double current_lr() const;
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t step_ = 0;
};

} // namespace kepler
