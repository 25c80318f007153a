#include "latentforge/serial.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "latentforge/errors.hpp"

namespace latentforge::serial {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Direct 1-D DFT of one line, sign = -1 forward / +1 inverse.
std::vector<std::complex<double>> dft_line(const std::vector<std::complex<double>>& in, int sign) {
    const int n = static_cast<int>(in.size());
    std::vector<std::complex<double>> out(n);
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (int j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * kPi * static_cast<double>(k) *
                               static_cast<double>(j) / static_cast<double>(n);
            acc += in[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

void transform2_direct(std::vector<std::complex<double>>& d, int channels, int height, int width,
                       int sign) {
    for (int c = 0; c < channels; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * height * width;
        for (int y = 0; y < height; ++y) {
            std::vector<std::complex<double>> row(width);
            for (int x = 0; x < width; ++x) {
                row[x] = d[base + static_cast<std::size_t>(y) * width + x];
            }
            row = dft_line(row, sign);
            for (int x = 0; x < width; ++x) {
                d[base + static_cast<std::size_t>(y) * width + x] = row[x];
            }
        }
        for (int x = 0; x < width; ++x) {
            std::vector<std::complex<double>> col(height);
            for (int y = 0; y < height; ++y) {
                col[y] = d[base + static_cast<std::size_t>(y) * width + x];
            }
            col = dft_line(col, sign);
            for (int y = 0; y < height; ++y) {
                d[base + static_cast<std::size_t>(y) * width + x] = col[y];
            }
        }
    }
}

}  // namespace

Spectrum dft2(const LatentGrid& g) {
    require_nonempty(g, "serial::dft2");
    validate_finite(g, "serial::dft2");
    const int C = g.channels, H = g.height, W = g.width;
    std::vector<std::complex<double>> d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        d[i] = {static_cast<double>(g.data[i]), 0.0};
    }
    transform2_direct(d, C, H, W, -1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(H) * static_cast<double>(W));
    Spectrum out(C, H, W);
    const int cy = H / 2, cx = W / 2;
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

LatentGrid idft2(const Spectrum& s) {
    if (s.data.empty()) {
        throw std::invalid_argument("serial::idft2: empty spectrum");
    }
    const int C = s.channels, H = s.height, W = s.width;
    const int cy = H / 2, cx = W / 2;
    std::vector<std::complex<double>> d(s.size());
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                d[(static_cast<std::size_t>(c) * H + y) * W + x] =
                    s.at(c, (y + cy) % H, (x + cx) % W);
            }
        }
    }
    transform2_direct(d, C, H, W, +1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(H) * static_cast<double>(W));
    double max_im = 0.0;
    for (const auto& v : d) {
        max_im = std::max(max_im, std::abs(v.imag()) * scale);
    }
    if (max_im > 1e-5) {
        throw NumericError("serial::idft2: imaginary residue above tolerance");
    }
    LatentGrid out(C, H, W);
    for (std::size_t i = 0; i < d.size(); ++i) {
        out.data[i] = static_cast<float>(d[i].real() * scale);
    }
    validate_finite(out, "serial::idft2");
    return out;
}

Spectrum attenuate(const Spectrum& s, const FrequencyFilter& low, const FrequencyFilter& high,
                   double alpha, Band band) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("serial::attenuate: alpha must be in [0, 1]");
    }
    Spectrum out(s.channels, s.height, s.width);
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t b = i % plane;
        const double factor = band == Band::Low ? alpha * low.data[b] + high.data[b]
                                                : low.data[b] + alpha * high.data[b];
        out.data[i] = s.data[i] * factor;
    }
    return out;
}

double mse(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "serial::mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double ssim(const LatentGrid& a, const LatentGrid& b, double dynamic_range) {
    require_same_shape(a, b, "serial::ssim");
    const double range = dynamic_range > 0.0 ? dynamic_range : 1.0;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const int win = std::min({8, a.height, a.width});
    const double n = static_cast<double>(win) * win;
    double channel_acc = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        double win_acc = 0.0;
        int win_count = 0;
        for (int y0 = 0; y0 + win <= a.height; ++y0) {
            for (int x0 = 0; x0 + win <= a.width; ++x0) {
                double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int y = y0; y < y0 + win; ++y) {
                    for (int x = x0; x < x0 + win; ++x) {
                        const double va = a.at(c, y, x);
                        const double vb = b.at(c, y, x);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                const double mu_a = sa / n;
                const double mu_b = sb / n;
                const double var_a = saa / n - mu_a * mu_a;
                const double var_b = sbb / n - mu_b * mu_b;
                const double cov = sab / n - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                win_acc += num / den;
                ++win_count;
            }
        }
        channel_acc += win_acc / static_cast<double>(win_count);
    }
    return channel_acc / static_cast<double>(a.channels);
}

Mat matmul(const Mat& x, const Mat& y) {
    if (x.cols != y.rows) {
        throw std::invalid_argument("serial::matmul: inner dimensions disagree");
    }
    Mat out(x.rows, y.cols);
    for (int r = 0; r < x.rows; ++r) {
        for (int c = 0; c < y.cols; ++c) {
            double acc = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                acc += static_cast<double>(x.at(r, k)) * static_cast<double>(y.at(k, c));
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

Mat attention(const Mat& q, const Mat& k, const Mat& v) {
    if (q.cols != k.cols || k.rows != v.rows) {
        throw std::invalid_argument("serial::attention: shape mismatch");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Mat scores(q.rows, k.rows);
    for (int r = 0; r < q.rows; ++r) {
        for (int c = 0; c < k.rows; ++c) {
            double acc = 0.0;
            for (int j = 0; j < q.cols; ++j) {
                acc += static_cast<double>(q.at(r, j)) * static_cast<double>(k.at(c, j));
            }
            scores.at(r, c) = static_cast<float>(acc * inv_sqrt_d);
        }
    }
    for (int r = 0; r < scores.rows; ++r) {
        double mx = scores.at(r, 0);
        for (int c = 1; c < scores.cols; ++c) {
            mx = std::max(mx, static_cast<double>(scores.at(r, c)));
        }
        double sum = 0.0;
        std::vector<double> e(scores.cols);
        for (int c = 0; c < scores.cols; ++c) {
            e[c] = std::exp(static_cast<double>(scores.at(r, c)) - mx);
            sum += e[c];
        }
        for (int c = 0; c < scores.cols; ++c) {
            scores.at(r, c) = static_cast<float>(e[c] / sum);
        }
    }
    return serial::matmul(scores, v);
}

LatentGrid sample_gaussian(int channels, int height, int width, double std_dev, uint64_t seed,
                           uint64_t counter0) {
    LatentGrid out(channels, height, width);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = static_cast<float>(std_dev * CounterRng::gaussian_at(seed, counter0 + i));
    }
    validate_finite(out, "serial::sample_gaussian");
    return out;
}

}  // namespace latentforge::serial
