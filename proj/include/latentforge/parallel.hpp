#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace latentforge {

// Two-pass sum: per-chunk partials computed in parallel, combined serially in
// index order. The grouping is fixed by the chunk size, not the thread count,
// so the result is bit-identical whether OpenMP runs 1 thread or 64.
template <class F>
double chunked_sum(std::size_t n, F&& term) {
    constexpr std::size_t kChunk = 4096;
    if (n == 0) {
        return 0.0;
    }
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(nchunks); ++ci) {
        const std::size_t lo = static_cast<std::size_t>(ci) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            s += term(i);
        }
        partial[static_cast<std::size_t>(ci)] = s;
    }
    double total = 0.0;
    for (double p : partial) {
        total += p;
    }
    return total;
}

}  // namespace latentforge
