#pragma once

#include <cstdint>

#include "latentforge/grid.hpp"
#include "latentforge/mat.hpp"
#include "latentforge/spectral.hpp"

// Single-threaded reference implementations of the parallel kernels, written
// as direct transcriptions of the math (direct DFT sums, plain per-window
// loops, naive matmul) with no code shared with the OpenMP paths. Tests use
// them as independent oracles; the benchmark tool compares the two.
namespace latentforge::serial {

// Direct separable DFT, unitary, DC-centered. Same contract as fft2/ifft2,
// O(N^2) per line instead of O(N log N).
Spectrum dft2(const LatentGrid& g);
LatentGrid idft2(const Spectrum& s);

// Per-bin band scaling, same contract as latentforge::attenuate.
Spectrum attenuate(const Spectrum& s, const FrequencyFilter& low, const FrequencyFilter& high,
                   double alpha, Band band);

// Plain accumulation over all cells.
double mse(const LatentGrid& a, const LatentGrid& b);

// Direct per-window SSIM: 8x8 windows, population statistics, k1/k2 on the
// given dynamic range, averaged over windows then channels.
double ssim(const LatentGrid& a, const LatentGrid& b, double dynamic_range);

// Naive triple-loop matmul, double accumulation.
Mat matmul(const Mat& x, const Mat& y);

// softmax(q k^T / sqrt(d)) v computed with the naive matmul.
Mat attention(const Mat& q, const Mat& k, const Mat& v);

// Sequential counter-based gaussian fill; must match the parallel
// sample_gaussian bit-for-bit.
LatentGrid sample_gaussian(int channels, int height, int width, double std_dev, uint64_t seed,
                           uint64_t counter0);

}  // namespace latentforge::serial
