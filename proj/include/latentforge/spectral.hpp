#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "latentforge/grid.hpp"

namespace latentforge {

// Complex spectrum of a LatentGrid: same layout, DC bin shifted to
// (height/2, width/2). Stored in double: the round-trip contract
// (max-abs error <= 1e-5 for inputs up to |10|) leaves no headroom in float.
struct Spectrum {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<std::complex<double>> data;

    Spectrum() = default;
    Spectrum(int channels, int height, int width);

    std::size_t size() const { return data.size(); }
    bool same_shape(const Spectrum& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    std::complex<double>& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    const std::complex<double>& at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

enum class Band { Low, High };

// Real per-bin response in [0,1]. The low filter is a Gaussian bump over the
// radius from the DC bin, normalized so its peak is exactly 1 and so the
// nearest spectrum edge sits at radius 1; the high filter is its exact
// complement, so low + high == 1 holds bin-for-bin in double arithmetic.
struct FrequencyFilter {
    Band band = Band::Low;
    int height = 0;
    int width = 0;
    double sigma = 0.0;
    std::vector<double> data;

    double at(int y, int x) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }
};

std::pair<FrequencyFilter, FrequencyFilter> gaussian_filters(int height, int width, double sigma);

// Unitary per-channel 2-D FFT (1/sqrt(H*W) each direction), DC centered.
// Radix-2 fast path for power-of-two dimensions, Bluestein otherwise.
Spectrum fft2(const LatentGrid& g);

// Inverse of fft2. The imaginary part left after the inverse transform must
// stay below 1e-5 max-abs; more than that means the spectrum did not come
// from a real grid, and NumericError is raised.
LatentGrid ifft2(const Spectrum& s);

// Band = Low keeps alpha*(f.L) + f.H per bin; Band = High keeps
// f.L + alpha*(f.H). alpha in [0,1].
Spectrum attenuate(const Spectrum& s, const FrequencyFilter& low, const FrequencyFilter& high,
                   double alpha, Band band);

// ifft2(attenuate(fft2(z), ...)) with filters built for z's shape.
LatentGrid frequency_attenuated_latent(const LatentGrid& z, double sigma, double alpha, Band band);

// Sum over bins of |f|^2 * filter^2 (energy seen through the filter).
double band_energy(const Spectrum& s, const FrequencyFilter& f);

// Total spectral energy, for Parseval checks.
double spectrum_energy(const Spectrum& s);

// Debug container: magic "FLXS", same header as FLXL, payload interleaved
// re/im f32 pairs. Lossy (double -> float); not used by the pipeline.
void spectrum_write(const Spectrum& s, const std::string& path);
Spectrum spectrum_read(const std::string& path);

}  // namespace latentforge
