#pragma once

#include <cstdint>
#include <vector>

#include "defocus/image.hpp"

namespace defocus::ref {

// Serial brute-force implementations kept alongside the optimized kernels.
// Tests use them as independent oracles; the benchmark target compares
// against them. Nothing here calls into the fast paths.

// J0 by direct power-series summation to machine precision (|x| <= ~30).
double bessel_j0_series(double x);

// Spatial-domain convolution, nested loops, same boundary semantics as the
// production convolve2d (reflect = symmetric half-sample, zero = zero fill).
enum class Boundary { reflect, zero };
RealImage convolve2d_spatial(const RealImage& image, const std::vector<double>& kernel,
                             int kernel_size, Boundary boundary);

// Mean SSIM over valid 11x11 windows, Gaussian sigma 1.5, K1 0.01, K2 0.03,
// dynamic range 65535. Direct per-window summation.
double ssim_windowed(const Image16& reference, const Image16& test);

// Direct seven-loop convolution forward pass for one sample batch:
// input (n, c, h, w), weights (oc, c, k, k), same padding, stride 1.
template <class T>
std::vector<T> conv_forward_direct(const std::vector<T>& input, int n, int c, int h, int w,
                                   const std::vector<T>& weights, const std::vector<T>& bias,
                                   int oc, int k);

}  // namespace defocus::ref
