#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "latentforge/grid.hpp"
#include "latentforge/mat.hpp"
#include "latentforge/metrics.hpp"
#include "latentforge/rng.hpp"
#include "latentforge/serial.hpp"
#include "latentforge/spectral.hpp"

namespace lf = latentforge;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) {
        fn();
    }
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms, double max_abs_diff) {
    std::printf("%-18s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.2e\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, max_abs_diff);
}

double grid_max_diff(const lf::LatentGrid& a, const lf::LatentGrid& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(static_cast<double>(a.data[i]) - b.data[i]);
        m = d > m ? d : m;
    }
    return m;
}

double mat_max_diff(const lf::Mat& a, const lf::Mat& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.a.size(); ++i) {
        const double d = std::abs(static_cast<double>(a.a[i]) - b.a[i]);
        m = d > m ? d : m;
    }
    return m;
}

}  // namespace

int main() {
    lf::CounterRng rng(42);
    const lf::LatentGrid z = lf::sample_gaussian(4, 64, 64, 1.0, rng);

    {
        lf::Spectrum s_par;
        lf::Spectrum s_ser;
        const double par = time_ms([&] { s_par = lf::fft2(z); }, 5);
        const double ser = time_ms([&] { s_ser = lf::serial::dft2(z); }, 2);
        double m = 0.0;
        for (std::size_t i = 0; i < s_par.data.size(); ++i) {
            m = std::max(m, std::abs(s_par.data[i] - s_ser.data[i]));
        }
        report("fft2 4x64x64", ser, par, m);
    }
    {
        lf::Mat x(256, 256);
        lf::Mat y(256, 256);
        for (std::size_t i = 0; i < x.a.size(); ++i) {
            x.a[i] = static_cast<float>(lf::CounterRng::gaussian_at(7, i));
            y.a[i] = static_cast<float>(lf::CounterRng::gaussian_at(8, i));
        }
        lf::Mat p_par;
        lf::Mat p_ser;
        const double par = time_ms([&] { p_par = lf::matmul(x, y); }, 5);
        const double ser = time_ms([&] { p_ser = lf::serial::matmul(x, y); }, 2);
        report("matmul 256^3", ser, par, mat_max_diff(p_par, p_ser));
    }
    {
        lf::Mat q(256, 32);
        lf::Mat k(256, 32);
        lf::Mat v(256, 32);
        for (std::size_t i = 0; i < q.a.size(); ++i) {
            q.a[i] = static_cast<float>(lf::CounterRng::gaussian_at(9, i));
            k.a[i] = static_cast<float>(lf::CounterRng::gaussian_at(10, i));
            v.a[i] = static_cast<float>(lf::CounterRng::gaussian_at(11, i));
        }
        lf::Mat a_par;
        lf::Mat a_ser;
        const double par = time_ms([&] { a_par = lf::attention_block(q, k, v); }, 10);
        const double ser = time_ms([&] { a_ser = lf::serial::attention(q, k, v); }, 5);
        report("attention 256x32", ser, par, mat_max_diff(a_par, a_ser));
    }
    {
        lf::CounterRng rng2(43);
        const lf::LatentGrid other = lf::sample_gaussian(4, 64, 64, 1.0, rng2);
        double s_par = 0.0;
        double s_ser = 0.0;
        const double par = time_ms([&] { s_par = lf::ssim(z, other, 2.0); }, 10);
        const double ser = time_ms([&] { s_ser = lf::serial::ssim(z, other, 2.0); }, 5);
        report("ssim 4x64x64", ser, par, std::abs(s_par - s_ser));
    }
    {
        lf::LatentGrid g_par;
        lf::LatentGrid g_ser;
        const double par = time_ms(
            [&] {
                lf::CounterRng r(99);
                g_par = lf::sample_gaussian(4, 128, 128, 1.0, r);
            },
            10);
        const double ser =
            time_ms([&] { g_ser = lf::serial::sample_gaussian(4, 128, 128, 1.0, 99, 0); }, 5);
        report("gaussian 4x128^2", ser, par, grid_max_diff(g_par, g_ser));
    }
    return 0;
}
