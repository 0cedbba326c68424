#pragma once

#include <memory>
#include <vector>

#include "defocus/image.hpp"

namespace defocus::detail {

enum class Pad { reflect, zero };

// Frequency-domain "same" convolution with an explicitly padded border.
// One instance caches the FFTW plans and the kernel spectrum, so repeated
// application (Richardson-Lucy) pays the kernel transform once.
class FftConvolver {
public:
    // image_h/image_w: input extent; kernel: odd square, row-major.
    FftConvolver(int image_h, int image_w, const std::vector<double>& kernel, int kernel_size);
    ~FftConvolver();

    FftConvolver(const FftConvolver&) = delete;
    FftConvolver& operator=(const FftConvolver&) = delete;

    RealImage apply(const RealImage& image, Pad pad) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Smallest 5-smooth integer >= n.
int next_fast_size(int n);

}  // namespace defocus::detail
