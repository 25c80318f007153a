#pragma once

#include <string>

#include "latentforge/grid.hpp"
#include "latentforge/maskgen.hpp"

namespace latentforge {

// PSNR sentinel: reported when the error is exactly zero, and the ceiling
// any finite value clamps to, so reports stay comparable.
inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::string computed_over = "whole";
};

// Mean squared difference; with a region mask, only cells where the mask is
// 1 count (broadcast across channels). A region selecting nothing is an
// error.
double mse(const LatentGrid& a, const LatentGrid& b, const EditMask* region = nullptr);

// 10*log10(peak^2 / mse) in dB, clamped to kPsnrCap; zero error reports the
// cap exactly.
double psnr(const LatentGrid& a, const LatentGrid& b, double peak,
            const EditMask* region = nullptr);

// PSNR with peak taken from the first grid's dynamic range (max - min);
// a constant reference has no range and is an error.
double psnr_ref_range(const LatentGrid& a, const LatentGrid& b,
                      const EditMask* region = nullptr);

// Mean local structural similarity over 8x8 windows at stride 1 (window
// shrinks to min(8, H, W) on small grids), population statistics,
// k1 = 0.01 / k2 = 0.03 on the dynamic range. The two-argument form uses the
// joint range of both grids, falling back to 1 when that range is zero.
double ssim(const LatentGrid& a, const LatentGrid& b, double dynamic_range);
double ssim(const LatentGrid& a, const LatentGrid& b);

// Re-inversion depth from the edit size and the mid/recon quality gap:
// blend = alpha_r*area_ratio + beta_r*(1 - clamp(psnr_mid/psnr_recon, 0, 1)),
// t_r = round(t_r1 + (t_r2 - t_r1)*blend), clamped to [t_r1, t_r2]. The
// inverted_blend_sign variant uses (t_r1 - t_r2), exits the range downward,
// and clamps to t_r1; it exists for comparison runs only.
int compute_t_r(int t_r1, int t_r2, double area_ratio, double psnr_mid, double psnr_recon,
                double alpha_r = 0.5, double beta_r = 0.5, bool inverted_blend_sign = false);

}  // namespace latentforge
