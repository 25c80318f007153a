#include "latentforge/rng.hpp"

#include <cmath>

namespace latentforge {

namespace {

// splitmix64 output function over seed + golden-ratio counter stride.
uint64_t mix64(uint64_t seed, uint64_t counter) {
    uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/*
 * Portable math kernels.
 *
 * Box-Muller needs log and cos. libm versions differ in the last ulp across
 * platforms, which would make gaussian streams platform-dependent and break
 * golden tests. These kernels use only IEEE-exact steps (frexp, sqrt,
 * +,-,*,/ with contraction disabled) and fixed-degree polynomials, so the
 * same inputs give the same bits everywhere.
 */

// ln x for x in (0, 1]. frexp puts the mantissa in [0.5, 1); shifting it into
// [sqrt(1/2), sqrt(2)) keeps |s| <= 0.1716 in the atanh series
// ln m = 2 * (s + s^3/3 + ... ), s = (m-1)/(m+1). Truncation past s^23 is
// below 1e-19.
double poly_log(double x) {
    int e = 0;
    double m = std::frexp(x, &e);
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    double s = (m - 1.0) / (m + 1.0);
    double y = s * s;
    static const double c[12] = {
        1.0,        1.0 / 3.0,  1.0 / 5.0,  1.0 / 7.0,  1.0 / 9.0,  1.0 / 11.0,
        1.0 / 13.0, 1.0 / 15.0, 1.0 / 17.0, 1.0 / 19.0, 1.0 / 21.0, 1.0 / 23.0,
    };
    double p = c[11];
    for (int k = 10; k >= 0; --k) {
        p = p * y + c[k];
    }
    double ln_m = 2.0 * s * p;
    const double ln2_hi = 6.93147180369123816490e-01;
    const double ln2_lo = 1.90821492927058770002e-10;
    double de = static_cast<double>(e);
    return de * ln2_hi + (ln_m + de * ln2_lo);
}

// cos(t) for |t| <= pi/4, Taylor through t^18.
double cos_kernel(double t2) {
    static const double c[10] = {
        1.0,
        -1.0 / 2.0,
        1.0 / 24.0,
        -1.0 / 720.0,
        1.0 / 40320.0,
        -1.0 / 3628800.0,
        1.0 / 479001600.0,
        -1.0 / 87178291200.0,
        1.0 / 20922789888000.0,
        -1.0 / 6402373705728000.0,
    };
    double p = c[9];
    for (int k = 8; k >= 0; --k) {
        p = p * t2 + c[k];
    }
    return p;
}

// sin(t)/t for |t| <= pi/4, Taylor through t^18.
double sin_kernel(double t2) {
    static const double c[10] = {
        1.0,
        -1.0 / 6.0,
        1.0 / 120.0,
        -1.0 / 5040.0,
        1.0 / 362880.0,
        -1.0 / 39916800.0,
        1.0 / 6227020800.0,
        -1.0 / 1307674368000.0,
        1.0 / 355687428096000.0,
        -1.0 / 121645100408832000.0,
    };
    double p = c[9];
    for (int k = 8; k >= 0; --k) {
        p = p * t2 + c[k];
    }
    return p;
}

// cos(2*pi*u) for u in [0, 1). Quadrant reduction: k = nearest multiple of
// 1/4, r = u - k/4 is Sterbenz-exact, so the only rounding before the
// kernels is the single product 2*pi*r.
double cos_2pi(double u) {
    int k = static_cast<int>(4.0 * u + 0.5);
    double r = u - 0.25 * static_cast<double>(k);
    double t = 6.28318530717958647692528677 * r;
    double t2 = t * t;
    switch (k & 3) {
        case 0: return cos_kernel(t2);
        case 1: return -(t * sin_kernel(t2));
        case 2: return -cos_kernel(t2);
        default: return t * sin_kernel(t2);
    }
}

}  // namespace

uint64_t CounterRng::bits_at(uint64_t seed, uint64_t counter) {
    return mix64(seed, counter);
}

double CounterRng::uniform_at(uint64_t seed, uint64_t counter) {
    return static_cast<double>(mix64(seed, counter) >> 11) * 0x1.0p-53;
}

double CounterRng::gaussian_at(uint64_t seed, uint64_t counter) {
    // u1 in (0, 1] keeps the log finite; 1 - u is exact for 53-bit uniforms.
    double u1 = 1.0 - uniform_at(seed, 2 * counter);
    double u2 = uniform_at(seed, 2 * counter + 1);
    return std::sqrt(-2.0 * poly_log(u1)) * cos_2pi(u2);
}

uint64_t CounterRng::substream(uint64_t seed, uint64_t stream_id) {
    return mix64(seed ^ 0xB5297A4D3F84D5A3ULL, stream_id);
}

uint64_t hash64(const std::string& text) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace latentforge
