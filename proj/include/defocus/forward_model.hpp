#pragma once

#include <cstdint>

#include "defocus/image.hpp"
#include "defocus/optics.hpp"

namespace defocus {

enum class Boundary { reflect, zero };

// "Same"-extent convolution with the chosen border extension. Computed in the
// frequency domain; deep-defocus kernels reach 70+ pixels of support.
RealImage convolve2d(const RealImage& image, const PsfKernel& kernel, Boundary boundary);

// Generic-kernel overload (odd square kernel, row-major, non-negative).
RealImage convolve2d(const RealImage& image, const std::vector<double>& kernel, int kernel_size,
                     Boundary boundary);

// Each pixel ~ Poisson(gain * value) / gain, rounded, clamped to 16 bits.
// Deterministic per seed and independent of thread count.
Image16 apply_poisson(const RealImage& image, double gain, uint64_t seed);

// Blur with the level's PSF, then add Poisson noise. Level 0 returns the
// input untouched (clean reference).
Image16 synthesize_defocused(const Image16& in_focus, const DefocusLevel& level,
                             const OpticalConfig& cfg, double gain, uint64_t seed);

// Variant reusing an already-built kernel (batch synthesis builds each level
// kernel once).
Image16 synthesize_defocused(const Image16& in_focus, const PsfKernel& kernel, double gain,
                             uint64_t seed);

}  // namespace defocus
