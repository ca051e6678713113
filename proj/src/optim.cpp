#include "kepler/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kepler {

double AdamOptimizer::current_lr() const {
    if (cfg_.warmup_steps <= 0) return cfg_.lr;
    const std::int64_t t = step_ + 1;
    if (t >= cfg_.warmup_steps) return cfg_.lr;
    return cfg_.lr * static_cast<double>(t) / static_cast<double>(cfg_.warmup_steps);
}

void AdamOptimizer::step(ParameterSet& params) {
    const double lr_t = current_lr();
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

    for (int s = 0; s < params.count(); ++s) {
        Param& p = params.at(s);
        if (!p.grad.all_finite())
            throw std::runtime_error("optimizer_step: non-finite gradient in parameter '" +
                                     p.name + "'");
        for (std::int64_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            p.m[i] = cfg_.beta1 * p.m[i] + (1.0 - cfg_.beta1) * g;
            p.v[i] = cfg_.beta2 * p.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = p.m[i] / bc1;
            const double vhat = p.v[i] / bc2;
            p.value[i] = quantize_f32(p.value[i] - lr_t * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        p.grad.fill(0.0);
    }
}

} // namespace kepler
