#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "latentforge/rng.hpp"

namespace latentforge {

// Dense C x H x W float tensor, channel-major then row-major. The common
// currency of the pipeline: latents, noise predictions, rendered means.
struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    LatentGrid() = default;
    LatentGrid(int channels, int height, int width, float fill = 0.0f);

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const LatentGrid& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Shape/content guards; `op` names the operation in the error message.
void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* op);
void require_nonempty(const LatentGrid& g, const char* op);

// Throws NumericError if any cell is NaN or infinite.
void validate_finite(const LatentGrid& g, const char* op);

// out[i] = a*x[i] + b*y[i]; coefficients in double, result checked finite.
LatentGrid lincomb(double a, const LatentGrid& x, double b, const LatentGrid& y,
                   const char* op = "lincomb");

// out[i] = s * x[i], checked finite.
LatentGrid scaled(const LatentGrid& x, double s, const char* op = "scaled");

// i.i.d. N(0, std_dev^2) fill. Counter-indexed: cell i uses draw base+i, so
// the grid is the same no matter how many threads fill it. Advances `rng`
// by one draw per cell.
LatentGrid sample_gaussian(int channels, int height, int width, double std_dev,
                           CounterRng& rng);

double grid_min(const LatentGrid& g);
double grid_max(const LatentGrid& g);

// Mean squared magnitude and relative L2 distance, summed deterministically.
double grid_mean_square(const LatentGrid& g);
double relative_l2(const LatentGrid& a, const LatentGrid& b);

// FLXL container: magic "FLXL", u32 version = 1, u32 channels/height/width,
// then channels*height*width f32 values, all little-endian. Round-trips every
// finite float bit-exactly.
void grid_write(const LatentGrid& g, const std::string& path);
LatentGrid grid_read(const std::string& path);

// 8-bit binary PGM preview of one channel, min-max normalized to 0..255.
// A zero-range channel exports as mid-gray 128.
void image_export(const LatentGrid& g, int channel, const std::string& path);

}  // namespace latentforge
