#pragma once

#include <vector>

#include "latentforge/grid.hpp"

namespace latentforge {

enum class ScheduleKind { Linear, ScaledLinear };

// Cumulative retention schedule over T steps. alpha_cumprod has T+1 entries,
// index 0 = 1 (clean data), strictly decreasing, final value > 0. Kept as a
// plain struct so tests can hand-build degenerate schedules; make_schedule is
// the validated constructor.
struct NoiseSchedule {
    int steps = 0;
    ScheduleKind kind = ScheduleKind::ScaledLinear;
    int base_steps = 0;
    std::vector<double> alpha_cumprod;

    double alpha_bar(int t) const;  // bounds-checked lookup, t in [0, steps]
    void validate() const;          // throws std::invalid_argument on violation
};

// Betas on the base grid (linear in beta, or linear in sqrt(beta) for
// scaled-linear), cumulative product, subsampled at uniform stride to T
// points with alpha_cumprod[0] = 1 prepended. Step t maps to base index
// t*base_steps/T - 1, so t = T lands on the last base bin.
NoiseSchedule make_schedule(int steps, ScheduleKind kind, double beta_start, double beta_end,
                            int base_steps);

// One denoising update: z_{t-1} from z_t and the noise estimate at step t.
LatentGrid ddim_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t,
                     const NoiseSchedule& sched);

// One inversion update: z*_t from z*_{t-1}, the algebraic reverse of
// ddim_step when both use the same eps_hat value.
LatentGrid ddim_invert_step(const LatentGrid& z_prev, const LatentGrid& eps_hat, int t,
                            const NoiseSchedule& sched);

// Classifier-free guidance: eps_uncond + scale*(eps_cond - eps_uncond).
// scale = 1 returns eps_cond exactly.
LatentGrid cfg_combine(const LatentGrid& eps_uncond, const LatentGrid& eps_cond, double scale);

}  // namespace latentforge
