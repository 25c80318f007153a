#include "latentforge/refine.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "latentforge/rng.hpp"
#include "latentforge/spectral.hpp"

namespace latentforge {

double compute_alpha(double ratio, double alpha_min, double alpha_max) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("compute_alpha: area ratio " + std::to_string(ratio) +
                                    " outside [0, 1]");
    }
    if (!std::isfinite(alpha_min) || !std::isfinite(alpha_max) || alpha_min > alpha_max) {
        throw std::invalid_argument("compute_alpha: need finite alpha_min <= alpha_max");
    }
    if (ratio > 0.5) {
        return alpha_max;
    }
    return alpha_min + 2.0 * (alpha_max - alpha_min) * ratio;
}

LatentGrid refine_latent(const LatentGrid& z_t, const EditMask& mask, const RefineParams& params) {
    require_nonempty(z_t, "refine_latent");
    if (mask.height != z_t.height || mask.width != z_t.width) {
        throw std::invalid_argument("refine_latent: mask " + std::to_string(mask.width) + "x" +
                                    std::to_string(mask.height) + " does not match latent " +
                                    std::to_string(z_t.width) + "x" +
                                    std::to_string(z_t.height));
    }
    if (!(params.alpha >= 0.0 && params.alpha <= 1.0)) {
        throw std::invalid_argument("refine_latent: alpha must be in [0, 1]");
    }
    if (!std::isfinite(params.noise_std) || params.noise_std < 0.0) {
        throw std::invalid_argument("refine_latent: noise_std must be finite and >= 0");
    }

    const LatentGrid attenuated =
        frequency_attenuated_latent(z_t, params.filter_sigma, params.alpha, Band::High);
    CounterRng rng(params.seed);
    const LatentGrid noise =
        sample_gaussian(z_t.channels, z_t.height, z_t.width, params.noise_std, rng);
    const double noise_w = 1.0 - params.alpha;

    LatentGrid out = z_t;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
        const std::size_t j = static_cast<std::size_t>(i);
        const std::size_t cell = j % (static_cast<std::size_t>(z_t.height) * z_t.width);
        if (mask.data[cell] != 0) {
            out.data[j] = static_cast<float>(static_cast<double>(attenuated.data[j]) +
                                             noise_w * static_cast<double>(noise.data[j]));
        }
    }
    return out;
}

}  // namespace latentforge
