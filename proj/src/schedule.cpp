#include "latentforge/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace latentforge {

namespace {

void check_step_range(int t, const NoiseSchedule& sched, const char* op) {
    if (t < 1 || t > sched.steps) {
        throw std::invalid_argument(std::string(op) + ": step " + std::to_string(t) +
                                    " outside [1, " + std::to_string(sched.steps) + "]");
    }
}

}  // namespace

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps) {
        throw std::invalid_argument("NoiseSchedule::alpha_bar: step " + std::to_string(t) +
                                    " outside [0, " + std::to_string(steps) + "]");
    }
    return alpha_cumprod[static_cast<std::size_t>(t)];
}

void NoiseSchedule::validate() const {
    if (steps < 1) {
        throw std::invalid_argument("NoiseSchedule: steps must be >= 1");
    }
    if (alpha_cumprod.size() != static_cast<std::size_t>(steps) + 1) {
        throw std::invalid_argument("NoiseSchedule: alpha_cumprod must have steps+1 entries");
    }
    if (alpha_cumprod[0] != 1.0) {
        throw std::invalid_argument("NoiseSchedule: alpha_cumprod[0] must be 1");
    }
    for (int t = 1; t <= steps; ++t) {
        const double prev = alpha_cumprod[static_cast<std::size_t>(t) - 1];
        const double cur = alpha_cumprod[static_cast<std::size_t>(t)];
        if (!(cur > 0.0) || !(cur < prev)) {
            throw std::invalid_argument(
                "NoiseSchedule: alpha_cumprod must be strictly decreasing and positive");
        }
    }
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind, double beta_start, double beta_end,
                            int base_steps) {
    if (steps < 1) {
        throw std::invalid_argument("make_schedule: steps must be >= 1");
    }
    if (base_steps < steps) {
        throw std::invalid_argument("make_schedule: base_steps must be >= steps");
    }
    if (!(beta_start > 0.0) || !(beta_start < beta_end) || !(beta_end < 1.0)) {
        throw std::invalid_argument("make_schedule: need 0 < beta_start < beta_end < 1");
    }
    std::vector<double> base_cumprod(static_cast<std::size_t>(base_steps));
    double prod = 1.0;
    for (int i = 0; i < base_steps; ++i) {
        const double frac = base_steps == 1
                                ? 0.0
                                : static_cast<double>(i) / static_cast<double>(base_steps - 1);
        double beta;
        if (kind == ScheduleKind::Linear) {
            beta = beta_start + (beta_end - beta_start) * frac;
        } else {
            const double sq = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * frac;
            beta = sq * sq;
        }
        prod *= 1.0 - beta;
        base_cumprod[static_cast<std::size_t>(i)] = prod;
    }
    NoiseSchedule sched;
    sched.steps = steps;
    sched.kind = kind;
    sched.base_steps = base_steps;
    sched.alpha_cumprod.resize(static_cast<std::size_t>(steps) + 1);
    sched.alpha_cumprod[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const long long idx =
            (static_cast<long long>(t) * static_cast<long long>(base_steps)) / steps - 1;
        sched.alpha_cumprod[static_cast<std::size_t>(t)] =
            base_cumprod[static_cast<std::size_t>(idx)];
    }
    sched.validate();
    return sched;
}

LatentGrid ddim_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t,
                     const NoiseSchedule& sched) {
    check_step_range(t, sched, "ddim_step");
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double a = std::sqrt(ab_prev / ab_t);
    const double b =
        std::sqrt(ab_prev) * (std::sqrt(1.0 / ab_prev - 1.0) - std::sqrt(1.0 / ab_t - 1.0));
    return lincomb(a, z_t, b, eps_hat, "ddim_step");
}

LatentGrid ddim_invert_step(const LatentGrid& z_prev, const LatentGrid& eps_hat, int t,
                            const NoiseSchedule& sched) {
    check_step_range(t, sched, "ddim_invert_step");
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double a = std::sqrt(ab_t / ab_prev);
    const double b =
        std::sqrt(ab_t) * (std::sqrt(1.0 / ab_t - 1.0) - std::sqrt(1.0 / ab_prev - 1.0));
    return lincomb(a, z_prev, b, eps_hat, "ddim_invert_step");
}

LatentGrid cfg_combine(const LatentGrid& eps_uncond, const LatentGrid& eps_cond, double scale) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    if (!(scale >= 1.0)) {
        throw std::invalid_argument("cfg_combine: scale must be >= 1");
    }
    if (scale == 1.0) {
        return eps_cond;
    }
    return lincomb(1.0 - scale, eps_uncond, scale, eps_cond, "cfg_combine");
}

}  // namespace latentforge
