#include "latentforge/grid.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "latentforge/errors.hpp"
#include "latentforge/parallel.hpp"

namespace latentforge {

namespace {

constexpr uint64_t kMaxCells = 1ull << 30;

void check_shape(int channels, int height, int width, const char* op) {
    if (channels <= 0 || height <= 0 || width <= 0) {
        throw std::invalid_argument(std::string(op) + ": all dimensions must be positive, got " +
                                    std::to_string(channels) + "x" + std::to_string(height) + "x" +
                                    std::to_string(width));
    }
    uint64_t cells = static_cast<uint64_t>(channels) * static_cast<uint64_t>(height) *
                     static_cast<uint64_t>(width);
    if (cells > kMaxCells) {
        throw std::invalid_argument(std::string(op) + ": shape overflow, " +
                                    std::to_string(cells) + " cells");
    }
}

void store_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

uint32_t load_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

LatentGrid::LatentGrid(int channels_, int height_, int width_, float fill) {
    check_shape(channels_, height_, width_, "LatentGrid");
    channels = channels_;
    height = height_;
    width = width_;
    data.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch, " +
                                    std::to_string(a.channels) + "x" + std::to_string(a.height) +
                                    "x" + std::to_string(a.width) + " vs " +
                                    std::to_string(b.channels) + "x" + std::to_string(b.height) +
                                    "x" + std::to_string(b.width));
    }
}

void require_nonempty(const LatentGrid& g, const char* op) {
    if (g.empty()) {
        throw std::invalid_argument(std::string(op) + ": empty grid");
    }
}

void validate_finite(const LatentGrid& g, const char* op) {
    const std::size_t n = g.size();
    bool bad = false;
#pragma omp parallel for schedule(static) reduction(||: bad)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        bad = bad || !std::isfinite(g.data[static_cast<std::size_t>(i)]);
    }
    if (bad) {
        throw NumericError(std::string(op) + ": non-finite value in grid");
    }
}

LatentGrid lincomb(double a, const LatentGrid& x, double b, const LatentGrid& y, const char* op) {
    require_nonempty(x, op);
    require_same_shape(x, y, op);
    LatentGrid out(x.channels, x.height, x.width);
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out.data[k] = static_cast<float>(a * x.data[k] + b * y.data[k]);
    }
    validate_finite(out, op);
    return out;
}

LatentGrid scaled(const LatentGrid& x, double s, const char* op) {
    require_nonempty(x, op);
    LatentGrid out(x.channels, x.height, x.width);
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out.data[k] = static_cast<float>(s * x.data[k]);
    }
    validate_finite(out, op);
    return out;
}

LatentGrid sample_gaussian(int channels, int height, int width, double std_dev, CounterRng& rng) {
    if (std_dev < 0.0 || !std::isfinite(std_dev)) {
        throw std::invalid_argument("sample_gaussian: std_dev must be finite and >= 0");
    }
    LatentGrid out(channels, height, width);
    const std::size_t n = out.size();
    const uint64_t seed = rng.seed();
    const uint64_t base = rng.reserve(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out.data[k] = static_cast<float>(std_dev * CounterRng::gaussian_at(seed, base + k));
    }
    validate_finite(out, "sample_gaussian");
    return out;
}

double grid_min(const LatentGrid& g) {
    require_nonempty(g, "grid_min");
    double m = g.data[0];
#pragma omp parallel for schedule(static) reduction(min: m)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.size()); ++i) {
        m = std::min(m, static_cast<double>(g.data[static_cast<std::size_t>(i)]));
    }
    return m;
}

double grid_max(const LatentGrid& g) {
    require_nonempty(g, "grid_max");
    double m = g.data[0];
#pragma omp parallel for schedule(static) reduction(max: m)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.size()); ++i) {
        m = std::max(m, static_cast<double>(g.data[static_cast<std::size_t>(i)]));
    }
    return m;
}

double grid_mean_square(const LatentGrid& g) {
    require_nonempty(g, "grid_mean_square");
    double s = chunked_sum(g.size(), [&](std::size_t i) {
        double v = g.data[i];
        return v * v;
    });
    return s / static_cast<double>(g.size());
}

double relative_l2(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "relative_l2");
    double num = chunked_sum(a.size(), [&](std::size_t i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        return d * d;
    });
    double den = chunked_sum(b.size(), [&](std::size_t i) {
        double v = b.data[i];
        return v * v;
    });
    if (den == 0.0) {
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return std::sqrt(num / den);
}

void grid_write(const LatentGrid& g, const std::string& path) {
    require_nonempty(g, "grid_write");
    std::string buf;
    buf.reserve(20 + g.size() * 4);
    buf.append("FLXL");
    store_u32le(buf, 1u);
    store_u32le(buf, static_cast<uint32_t>(g.channels));
    store_u32le(buf, static_cast<uint32_t>(g.height));
    store_u32le(buf, static_cast<uint32_t>(g.width));
    for (float v : g.data) {
        store_u32le(buf, std::bit_cast<uint32_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("grid_write: cannot open '" + path + "'");
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) {
        throw FormatError("grid_write: write failed for '" + path + "'");
    }
}

LatentGrid grid_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("grid_read: cannot open '" + path + "'");
    }
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 20 || std::memcmp(p, "FLXL", 4) != 0) {
        throw FormatError("grid_read: '" + path + "' is not an FLXL file");
    }
    uint32_t version = load_u32le(p + 4);
    if (version != 1) {
        throw FormatError("grid_read: unsupported FLXL version " + std::to_string(version));
    }
    uint32_t c = load_u32le(p + 8);
    uint32_t h = load_u32le(p + 12);
    uint32_t w = load_u32le(p + 16);
    if (c == 0 || h == 0 || w == 0) {
        throw FormatError("grid_read: zero dimension in header of '" + path + "'");
    }
    uint64_t cells = static_cast<uint64_t>(c) * h * w;
    if (cells > kMaxCells) {
        throw FormatError("grid_read: shape overflow in header of '" + path + "'");
    }
    if (buf.size() != 20 + cells * 4) {
        throw FormatError("grid_read: payload size mismatch in '" + path + "', header wants " +
                          std::to_string(cells) + " values");
    }
    LatentGrid g(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (uint64_t i = 0; i < cells; ++i) {
        g.data[i] = std::bit_cast<float>(load_u32le(p + 20 + i * 4));
    }
    for (float v : g.data) {
        if (!std::isfinite(v)) {
            throw FormatError("grid_read: non-finite value in payload of '" + path + "'");
        }
    }
    return g;
}

void image_export(const LatentGrid& g, int channel, const std::string& path) {
    require_nonempty(g, "image_export");
    if (channel < 0 || channel >= g.channels) {
        throw std::invalid_argument("image_export: channel " + std::to_string(channel) +
                                    " out of range");
    }
    const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
    const float* src = g.data.data() + static_cast<std::size_t>(channel) * plane;
    double lo = src[0], hi = src[0];
    for (std::size_t i = 1; i < plane; ++i) {
        lo = std::min(lo, static_cast<double>(src[i]));
        hi = std::max(hi, static_cast<double>(src[i]));
    }
    std::string buf = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
    const double range = hi - lo;
    for (std::size_t i = 0; i < plane; ++i) {
        int v = 128;
        if (range > 0.0) {
            v = static_cast<int>(std::lround(255.0 * (src[i] - lo) / range));
            v = std::max(0, std::min(255, v));
        }
        buf.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("image_export: cannot open '" + path + "'");
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) {
        throw FormatError("image_export: write failed for '" + path + "'");
    }
}

}  // namespace latentforge
