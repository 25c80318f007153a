#include "latentforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentforge/parallel.hpp"

namespace latentforge {

namespace {

void check_region(const LatentGrid& a, const EditMask* region, const char* op) {
    if (region == nullptr) {
        return;
    }
    if (region->height != a.height || region->width != a.width) {
        throw std::invalid_argument(std::string(op) + ": region mask " +
                                    std::to_string(region->width) + "x" +
                                    std::to_string(region->height) + " does not match grid " +
                                    std::to_string(a.width) + "x" + std::to_string(a.height));
    }
    if (region->area_edit() == 0) {
        throw std::invalid_argument(std::string(op) + ": region selects no cells");
    }
}

// One channel's summed-area tables; entry (y, x) holds the sum over the
// [0,y) x [0,x) corner.
struct Sat {
    int width = 0;
    std::vector<double> s;

    double& at(int y, int x) { return s[static_cast<std::size_t>(y) * (width + 1) + x]; }
    double at(int y, int x) const { return s[static_cast<std::size_t>(y) * (width + 1) + x]; }

    double box(int y0, int x0, int y1, int x1) const {
        return at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
    }
};

Sat build_sat(const LatentGrid& a, const LatentGrid& b, int c, int which) {
    Sat sat;
    sat.width = a.width;
    sat.s.assign(static_cast<std::size_t>(a.height + 1) * (a.width + 1), 0.0);
    for (int y = 0; y < a.height; ++y) {
        double row = 0.0;
        for (int x = 0; x < a.width; ++x) {
            const double va = a.at(c, y, x);
            const double vb = b.at(c, y, x);
            double v = 0.0;
            switch (which) {
                case 0: v = va; break;
                case 1: v = vb; break;
                case 2: v = va * va; break;
                case 3: v = vb * vb; break;
                default: v = va * vb; break;
            }
            row += v;
            sat.at(y + 1, x + 1) = sat.at(y, x + 1) + row;
        }
    }
    return sat;
}

}  // namespace

double mse(const LatentGrid& a, const LatentGrid& b, const EditMask* region) {
    require_same_shape(a, b, "mse");
    require_nonempty(a, "mse");
    check_region(a, region, "mse");
    const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
    const double sum = chunked_sum(a.size(), [&](std::size_t i) {
        if (region != nullptr && region->data[i % plane] == 0) {
            return 0.0;
        }
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        return d * d;
    });
    const std::size_t cells =
        region != nullptr ? region->area_edit() * static_cast<std::size_t>(a.channels)
                          : a.size();
    return sum / static_cast<double>(cells);
}

double psnr(const LatentGrid& a, const LatentGrid& b, double peak, const EditMask* region) {
    if (!(peak > 0.0) || !std::isfinite(peak)) {
        throw std::invalid_argument("psnr: peak must be finite and > 0");
    }
    const double err = mse(a, b, region);
    if (err == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / err));
}

double psnr_ref_range(const LatentGrid& a, const LatentGrid& b, const EditMask* region) {
    const double range = grid_max(a) - grid_min(a);
    if (range <= 0.0) {
        throw std::invalid_argument("psnr_ref_range: reference grid has zero dynamic range");
    }
    return psnr(a, b, range, region);
}

double ssim(const LatentGrid& a, const LatentGrid& b, double dynamic_range) {
    require_same_shape(a, b, "ssim");
    require_nonempty(a, "ssim");
    const double range = dynamic_range > 0.0 ? dynamic_range : 1.0;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const int win = std::min({8, a.height, a.width});
    const double n = static_cast<double>(win) * win;
    const int rows = a.height - win + 1;
    const int cols = a.width - win + 1;

    double channel_acc = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Sat sa = build_sat(a, b, c, 0);
        const Sat sb = build_sat(a, b, c, 1);
        const Sat saa = build_sat(a, b, c, 2);
        const Sat sbb = build_sat(a, b, c, 3);
        const Sat sab = build_sat(a, b, c, 4);

        std::vector<double> row_acc(static_cast<std::size_t>(rows), 0.0);
#pragma omp parallel for schedule(static)
        for (int y0 = 0; y0 < rows; ++y0) {
            double acc = 0.0;
            for (int x0 = 0; x0 < cols; ++x0) {
                const int y1 = y0 + win;
                const int x1 = x0 + win;
                const double mu_a = sa.box(y0, x0, y1, x1) / n;
                const double mu_b = sb.box(y0, x0, y1, x1) / n;
                const double var_a = saa.box(y0, x0, y1, x1) / n - mu_a * mu_a;
                const double var_b = sbb.box(y0, x0, y1, x1) / n - mu_b * mu_b;
                const double cov = sab.box(y0, x0, y1, x1) / n - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                acc += num / den;
            }
            row_acc[static_cast<std::size_t>(y0)] = acc;
        }
        double win_acc = 0.0;
        for (double r : row_acc) {
            win_acc += r;
        }
        channel_acc += win_acc / (static_cast<double>(rows) * cols);
    }
    return channel_acc / static_cast<double>(a.channels);
}

double ssim(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "ssim");
    require_nonempty(a, "ssim");
    const double hi = std::max(grid_max(a), grid_max(b));
    const double lo = std::min(grid_min(a), grid_min(b));
    return ssim(a, b, hi - lo);
}

int compute_t_r(int t_r1, int t_r2, double area_ratio, double psnr_mid, double psnr_recon,
                double alpha_r, double beta_r, bool inverted_blend_sign) {
    if (t_r1 >= t_r2) {
        throw std::invalid_argument("compute_t_r: need t_r1 < t_r2, got [" +
                                    std::to_string(t_r1) + ", " + std::to_string(t_r2) + "]");
    }
    if (!(area_ratio >= 0.0 && area_ratio <= 1.0)) {
        throw std::invalid_argument("compute_t_r: area ratio outside [0, 1]");
    }
    if (!(psnr_recon > 0.0) || !std::isfinite(psnr_recon)) {
        throw std::invalid_argument("compute_t_r: reconstruction PSNR must be finite and > 0");
    }
    if (!std::isfinite(psnr_mid)) {
        throw std::invalid_argument("compute_t_r: mid PSNR must be finite");
    }
    if (!std::isfinite(alpha_r) || alpha_r < 0.0 || !std::isfinite(beta_r) || beta_r < 0.0) {
        throw std::invalid_argument("compute_t_r: blend coefficients must be finite and >= 0");
    }
    const double quality = std::clamp(psnr_mid / psnr_recon, 0.0, 1.0);
    const double blend = alpha_r * area_ratio + beta_r * (1.0 - quality);
    const double span = inverted_blend_sign ? static_cast<double>(t_r1 - t_r2)
                                            : static_cast<double>(t_r2 - t_r1);
    const long raw = std::lround(static_cast<double>(t_r1) + span * blend);
    return static_cast<int>(std::clamp(raw, static_cast<long>(t_r1), static_cast<long>(t_r2)));
}

}  // namespace latentforge
