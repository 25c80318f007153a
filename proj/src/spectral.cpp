#include "latentforge/spectral.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "latentforge/errors.hpp"
#include "latentforge/parallel.hpp"

namespace latentforge {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kImagResidueTol = 1e-5;

bool is_pow2(int n) {
    return n > 0 && (n & (n - 1)) == 0;
}

// In-place radix-2 FFT, sign = -1 forward, +1 inverse, unnormalized.
void fft_pow2(std::complex<double>* a, int n, int sign) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * kPi / len;
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Bluestein's algorithm: any length as a convolution padded to a power of
// two. The chirp exponent uses k^2 mod 2n to keep the angle argument small.
void fft_bluestein(std::complex<double>* a, int n, int sign) {
    int m = 1;
    while (m < 2 * n - 1) {
        m <<= 1;
    }
    std::vector<std::complex<double>> chirp(n);
    std::vector<std::complex<double>> fa(m, {0.0, 0.0});
    std::vector<std::complex<double>> fb(m, {0.0, 0.0});
    for (int k = 0; k < n; ++k) {
        const long long k2 = (1LL * k * k) % (2LL * n);
        const double ang = sign * kPi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    for (int k = 0; k < n; ++k) {
        fa[k] = a[k] * chirp[k];
    }
    fb[0] = std::conj(chirp[0]);
    for (int k = 1; k < n; ++k) {
        fb[k] = std::conj(chirp[k]);
        fb[m - k] = std::conj(chirp[k]);
    }
    fft_pow2(fa.data(), m, -1);
    fft_pow2(fb.data(), m, -1);
    for (int i = 0; i < m; ++i) {
        fa[i] *= fb[i];
    }
    fft_pow2(fa.data(), m, +1);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int k = 0; k < n; ++k) {
        a[k] = fa[k] * chirp[k] * inv_m;
    }
}

void fft_1d(std::complex<double>* a, int n, int sign) {
    if (n == 1) {
        return;
    }
    if (is_pow2(n)) {
        fft_pow2(a, n, sign);
    } else {
        fft_bluestein(a, n, sign);
    }
}

// Rows then columns of every channel, unnormalized.
void transform2(std::vector<std::complex<double>>& d, int channels, int height, int width,
                int sign) {
    const int rows = channels * height;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        fft_1d(&d[static_cast<std::size_t>(r) * width], width, sign);
    }
    const int cols = channels * width;
#pragma omp parallel for schedule(static)
    for (int idx = 0; idx < cols; ++idx) {
        const int c = idx / width;
        const int x = idx % width;
        std::vector<std::complex<double>> col(height);
        const std::size_t base = static_cast<std::size_t>(c) * height * width + x;
        for (int y = 0; y < height; ++y) {
            col[y] = d[base + static_cast<std::size_t>(y) * width];
        }
        fft_1d(col.data(), height, sign);
        for (int y = 0; y < height; ++y) {
            d[base + static_cast<std::size_t>(y) * width] = col[y];
        }
    }
}

void require_filter_pair(const Spectrum& s, const FrequencyFilter& low,
                         const FrequencyFilter& high) {
    if (low.band != Band::Low || high.band != Band::High) {
        throw std::invalid_argument("attenuate: filters passed in the wrong order");
    }
    if (low.height != s.height || low.width != s.width || high.height != s.height ||
        high.width != s.width) {
        throw std::invalid_argument("attenuate: filter shape does not match spectrum");
    }
    if (low.sigma != high.sigma) {
        throw std::invalid_argument("attenuate: filters built with different sigma");
    }
    const std::size_t n = low.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (low.data[i] + high.data[i] != 1.0) {
            throw std::invalid_argument("attenuate: filters are not complementary");
        }
    }
}

}  // namespace

Spectrum::Spectrum(int channels_, int height_, int width_) {
    if (channels_ <= 0 || height_ <= 0 || width_ <= 0) {
        throw std::invalid_argument("Spectrum: all dimensions must be positive");
    }
    channels = channels_;
    height = height_;
    width = width_;
    data.assign(static_cast<std::size_t>(channels) * height * width, {0.0, 0.0});
}

std::pair<FrequencyFilter, FrequencyFilter> gaussian_filters(int height, int width, double sigma) {
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("gaussian_filters: dimensions must be positive");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("gaussian_filters: sigma must be finite and > 0");
    }
    FrequencyFilter low;
    low.band = Band::Low;
    low.height = height;
    low.width = width;
    low.sigma = sigma;
    low.data.resize(static_cast<std::size_t>(height) * width);
    FrequencyFilter high = low;
    high.band = Band::High;

    const int cy = height / 2;
    const int cx = width / 2;
    // Radius normalized so the nearest spectrum edge sits at r = 1.
    const double r_edge = 0.5 * static_cast<double>(std::min(height, width));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dy = static_cast<double>(y - cy) / r_edge;
            const double dx = static_cast<double>(x - cx) / r_edge;
            const double r2 = dy * dy + dx * dx;
            const double l = std::exp(-r2 * inv_two_sigma2);
            low.data[static_cast<std::size_t>(y) * width + x] = l;
            high.data[static_cast<std::size_t>(y) * width + x] = 1.0 - l;
        }
    }
    return {std::move(low), std::move(high)};
}

Spectrum fft2(const LatentGrid& g) {
    require_nonempty(g, "fft2");
    validate_finite(g, "fft2");
    const int C = g.channels, H = g.height, W = g.width;
    std::vector<std::complex<double>> d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        d[i] = {static_cast<double>(g.data[i]), 0.0};
    }
    transform2(d, C, H, W, -1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(H) * static_cast<double>(W));
    Spectrum out(C, H, W);
    const int cy = H / 2, cx = W / 2;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                out.at(c, (y + cy) % H, (x + cx) % W) =
                    d[(static_cast<std::size_t>(c) * H + y) * W + x] * scale;
            }
        }
    }
    return out;
}

LatentGrid ifft2(const Spectrum& s) {
    if (s.channels <= 0 || s.height <= 0 || s.width <= 0 || s.data.empty()) {
        throw std::invalid_argument("ifft2: empty spectrum");
    }
    for (const auto& v : s.data) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw NumericError("ifft2: non-finite bin in spectrum");
        }
    }
    const int C = s.channels, H = s.height, W = s.width;
    const int cy = H / 2, cx = W / 2;
    std::vector<std::complex<double>> d(s.size());
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                d[(static_cast<std::size_t>(c) * H + y) * W + x] =
                    s.at(c, (y + cy) % H, (x + cx) % W);
            }
        }
    }
    transform2(d, C, H, W, +1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(H) * static_cast<double>(W));
    double max_im = 0.0;
#pragma omp parallel for schedule(static) reduction(max: max_im)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.size()); ++i) {
        max_im = std::max(max_im, std::abs(d[static_cast<std::size_t>(i)].imag()) * scale);
    }
    if (max_im > kImagResidueTol) {
        throw NumericError("ifft2: imaginary residue " + std::to_string(max_im) +
                           " above tolerance; spectrum is not from a real grid");
    }
    LatentGrid out(C, H, W);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.size()); ++i) {
        out.data[static_cast<std::size_t>(i)] =
            static_cast<float>(d[static_cast<std::size_t>(i)].real() * scale);
    }
    validate_finite(out, "ifft2");
    return out;
}

Spectrum attenuate(const Spectrum& s, const FrequencyFilter& low, const FrequencyFilter& high,
                   double alpha, Band band) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("attenuate: alpha must be in [0, 1]");
    }
    require_filter_pair(s, low, high);
    Spectrum out(s.channels, s.height, s.width);
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(s.size()); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const std::size_t b = k % plane;
        const double factor = band == Band::Low ? alpha * low.data[b] + high.data[b]
                                                : low.data[b] + alpha * high.data[b];
        out.data[k] = s.data[k] * factor;
    }
    return out;
}

LatentGrid frequency_attenuated_latent(const LatentGrid& z, double sigma, double alpha,
                                       Band band) {
    auto [low, high] = gaussian_filters(z.height, z.width, sigma);
    return ifft2(attenuate(fft2(z), low, high, alpha, band));
}

double band_energy(const Spectrum& s, const FrequencyFilter& f) {
    if (f.height != s.height || f.width != s.width) {
        throw std::invalid_argument("band_energy: filter shape does not match spectrum");
    }
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    return chunked_sum(s.size(), [&](std::size_t i) {
        const double w = f.data[i % plane];
        return std::norm(s.data[i]) * w * w;
    });
}

double spectrum_energy(const Spectrum& s) {
    return chunked_sum(s.size(), [&](std::size_t i) { return std::norm(s.data[i]); });
}

void spectrum_write(const Spectrum& s, const std::string& path) {
    if (s.data.empty()) {
        throw std::invalid_argument("spectrum_write: empty spectrum");
    }
    std::string buf;
    buf.reserve(20 + s.size() * 8);
    buf.append("FLXS");
    auto put_u32 = [&buf](uint32_t v) {
        buf.push_back(static_cast<char>(v & 0xFF));
        buf.push_back(static_cast<char>((v >> 8) & 0xFF));
        buf.push_back(static_cast<char>((v >> 16) & 0xFF));
        buf.push_back(static_cast<char>((v >> 24) & 0xFF));
    };
    put_u32(1u);
    put_u32(static_cast<uint32_t>(s.channels));
    put_u32(static_cast<uint32_t>(s.height));
    put_u32(static_cast<uint32_t>(s.width));
    for (const auto& v : s.data) {
        put_u32(std::bit_cast<uint32_t>(static_cast<float>(v.real())));
        put_u32(std::bit_cast<uint32_t>(static_cast<float>(v.imag())));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("spectrum_write: cannot open '" + path + "'");
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) {
        throw FormatError("spectrum_write: write failed for '" + path + "'");
    }
}

Spectrum spectrum_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("spectrum_read: cannot open '" + path + "'");
    }
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    auto get_u32 = [p](std::size_t off) {
        return static_cast<uint32_t>(p[off]) | (static_cast<uint32_t>(p[off + 1]) << 8) |
               (static_cast<uint32_t>(p[off + 2]) << 16) |
               (static_cast<uint32_t>(p[off + 3]) << 24);
    };
    if (buf.size() < 20 || std::memcmp(p, "FLXS", 4) != 0) {
        throw FormatError("spectrum_read: '" + path + "' is not an FLXS file");
    }
    if (get_u32(4) != 1) {
        throw FormatError("spectrum_read: unsupported FLXS version");
    }
    const uint32_t c = get_u32(8), h = get_u32(12), w = get_u32(16);
    if (c == 0 || h == 0 || w == 0) {
        throw FormatError("spectrum_read: zero dimension in header");
    }
    const uint64_t bins = static_cast<uint64_t>(c) * h * w;
    if (bins > (1ull << 30) || buf.size() != 20 + bins * 8) {
        throw FormatError("spectrum_read: payload size mismatch in '" + path + "'");
    }
    Spectrum s(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (uint64_t i = 0; i < bins; ++i) {
        const float re = std::bit_cast<float>(get_u32(20 + i * 8));
        const float im = std::bit_cast<float>(get_u32(24 + i * 8));
        s.data[i] = {static_cast<double>(re), static_cast<double>(im)};
    }
    return s;
}

}  // namespace latentforge
