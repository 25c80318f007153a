#pragma once

#include <cstdint>

#include "latentforge/grid.hpp"
#include "latentforge/maskgen.hpp"

namespace latentforge {

// Controls for the starting-latent rework. `alpha` scales the high band
// inside the mask (1 = keep everything); the auto path derives it from the
// mask area via compute_alpha, clamped to [alpha_min, alpha_max]. `noise_std`
// is the standard deviation of the injected Gaussian before its (1 - alpha)
// weight; `filter_sigma` shapes the frequency split; `seed` fixes the noise.
struct RefineParams {
    double alpha = 0.9;
    double alpha_min = 0.5;
    double alpha_max = 0.9;
    double noise_std = 1.0;
    double filter_sigma = 0.3;
    uint64_t seed = 0;
};

// Piecewise-linear attenuation strength from the mask area fraction:
// alpha_min + 2*(alpha_max - alpha_min)*ratio up to ratio 0.5, then
// alpha_max.
double compute_alpha(double ratio, double alpha_min = 0.5, double alpha_max = 0.9);

// Reworked starting latent: outside the mask the input passes through
// bit-identically; inside, the high band is scaled by alpha and Gaussian
// noise weighted by (1 - alpha) is added. The attenuated grid and the noise
// are both built over the full grid, then composed through the mask.
LatentGrid refine_latent(const LatentGrid& z_t, const EditMask& mask, const RefineParams& params);

}  // namespace latentforge
