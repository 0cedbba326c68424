// Optimized kernels vs the serial reference implementations.
// Run: build/bench/kernel_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <cmath>

#include "defocus/delpnet.hpp"
#include "defocus/forward_model.hpp"
#include "defocus/metrics.hpp"
#include "defocus/optics.hpp"
#include "defocus/reference.hpp"
#include "defocus/restore.hpp"
#include "defocus/rng.hpp"

using namespace defocus;

namespace {

RealImage bench_image(int w, int h, uint64_t seed) {
    Xoshiro256 rng(seed);
    RealImage img(w, h);
    for (auto& v : img.data) v = 100.0 + rng.uniform() * 5000.0;
    return img;
}

std::vector<double> bench_kernel(int k, uint64_t seed) {
    Xoshiro256 rng(seed);
    std::vector<double> kern(static_cast<size_t>(k) * k);
    double sum = 0.0;
    for (auto& v : kern) {
        v = rng.uniform() + 1e-3;
        sum += v;
    }
    for (auto& v : kern) v /= sum;
    return kern;
}

}  // namespace

static void BM_Convolve2D_Fft(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const RealImage img = bench_image(n, n, 1);
    const auto kern = bench_kernel(31, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(convolve2d(img, kern, 31, Boundary::reflect));
    }
}
BENCHMARK(BM_Convolve2D_Fft)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Convolve2D_ReferenceSpatial(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const RealImage img = bench_image(n, n, 1);
    const auto kern = bench_kernel(31, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ref::convolve2d_spatial(img, kern, 31, ref::Boundary::reflect));
    }
}
BENCHMARK(BM_Convolve2D_ReferenceSpatial)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_RichardsonLucy(benchmark::State& state) {
    OpticalConfig cfg;
    const PsfKernel k3 = build_psf_kernel(DefocusLevel::at(3, cfg), cfg);
    const RealImage img = bench_image(84, 84, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(richardson_lucy(img, k3, 10));
    }
}
BENCHMARK(BM_RichardsonLucy)->Unit(benchmark::kMillisecond);

static void BM_Ssim_Separable(benchmark::State& state) {
    Xoshiro256 rng(4);
    Image16 a(256, 256), b(256, 256);
    for (auto& v : a.data) v = static_cast<uint16_t>(rng.below(65536));
    for (auto& v : b.data) v = static_cast<uint16_t>(rng.below(65536));
    for (auto _ : state) {
        benchmark::DoNotOptimize(ssim(a, b));
    }
}
BENCHMARK(BM_Ssim_Separable)->Unit(benchmark::kMillisecond);

static void BM_Ssim_ReferenceWindowed(benchmark::State& state) {
    Xoshiro256 rng(4);
    Image16 a(256, 256), b(256, 256);
    for (auto& v : a.data) v = static_cast<uint16_t>(rng.below(65536));
    for (auto& v : b.data) v = static_cast<uint16_t>(rng.below(65536));
    for (auto _ : state) {
        benchmark::DoNotOptimize(ref::ssim_windowed(a, b));
    }
}
BENCHMARK(BM_Ssim_ReferenceWindowed)->Unit(benchmark::kMillisecond);

static void BM_ConvLayer_Im2colGemm(benchmark::State& state) {
    const int n = 8, c = 64, hw = 42, oc = 64;
    nn::Tensor4<float> x(n, c, hw, hw);
    Xoshiro256 rng(5);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    nn::Conv2d<float> conv(c, oc, 3);
    auto views = conv.params();
    for (auto& v : *views[0].value) v = static_cast<float>(rng.uniform() - 0.5);
    Xoshiro256 dummy(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv.forward(x, false, dummy));
    }
}
BENCHMARK(BM_ConvLayer_Im2colGemm)->Unit(benchmark::kMillisecond);

static void BM_ConvLayer_ReferenceDirect(benchmark::State& state) {
    const int n = 8, c = 64, hw = 42, oc = 64;
    Xoshiro256 rng(5);
    std::vector<float> x(static_cast<size_t>(n) * c * hw * hw);
    for (auto& v : x) v = static_cast<float>(rng.uniform());
    std::vector<float> w(static_cast<size_t>(oc) * c * 9);
    for (auto& v : w) v = static_cast<float>(rng.uniform() - 0.5f);
    std::vector<float> b(oc, 0.0f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ref::conv_forward_direct(x, n, c, hw, hw, w, b, oc, 3));
    }
}
BENCHMARK(BM_ConvLayer_ReferenceDirect)->Unit(benchmark::kMillisecond);

static void BM_BesselJ0(benchmark::State& state) {
    for (auto _ : state) {
        double acc = 0.0;
        for (double x = 0.0; x < 200.0; x += 0.05) acc += bessel_j0(x);
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_BesselJ0);

static void BM_BesselJ0_ReferenceSeries(benchmark::State& state) {
    for (auto _ : state) {
        double acc = 0.0;
        for (double x = 0.0; x < 25.0; x += 0.05) acc += ref::bessel_j0_series(x);
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_BesselJ0_ReferenceSeries);

BENCHMARK_MAIN();
