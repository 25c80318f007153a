#pragma once

#include <cstdint>
#include <string>

namespace latentforge {

// Counter-based generator: every output is a pure function of (seed, counter),
// so a stream can be evaluated out of order, split across threads, or
// replayed from any offset and still come out bit-identical. The uniform
// stage is the splitmix64 output function; gaussians are Box-Muller over two
// consecutive uniform cells, evaluated with fixed-degree polynomial log/cos
// kernels (see rng.cpp) instead of libm so the bits do not depend on the
// platform's math library.
class CounterRng {
public:
    CounterRng() : seed_(0) {}
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    // Raw 64-bit cell value.
    static uint64_t bits_at(uint64_t seed, uint64_t counter);

    // Uniform in [0, 1), 53-bit resolution.
    static double uniform_at(uint64_t seed, uint64_t counter);

    // Standard normal. Draw i consumes uniform cells 2i and 2i+1, so
    // gaussian and uniform draws index disjoint cells only if a given
    // instance sticks to one kind; use substream() to split purposes.
    static double gaussian_at(uint64_t seed, uint64_t counter);

    // Derive an independent seed for a named purpose.
    static uint64_t substream(uint64_t seed, uint64_t stream_id);

    // Stream interface. Each call advances the counter by one draw.
    double next_uniform() { return uniform_at(seed_, counter_++); }
    double next_gaussian() { return gaussian_at(seed_, counter_++); }

    // Reserve n consecutive draw indices and return the first; lets callers
    // fill bulk buffers in parallel while keeping the stream position exact.
    uint64_t reserve(uint64_t n) {
        uint64_t base = counter_;
        counter_ += n;
        return base;
    }

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

// FNV-1a, used to hash words into seeds for embeddings and world geometry.
uint64_t hash64(const std::string& text);

}  // namespace latentforge
