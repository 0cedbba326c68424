#include "defocus/forward_model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "defocus/rng.hpp"
#include "defocus/threading.hpp"
#include "fft_conv.hpp"

namespace defocus {

namespace {

detail::Pad to_pad(Boundary b) {
    return b == Boundary::reflect ? detail::Pad::reflect : detail::Pad::zero;
}

}  // namespace

RealImage convolve2d(const RealImage& image, const std::vector<double>& kernel, int kernel_size,
                     Boundary boundary) {
    if (kernel_size >= image.width || kernel_size >= image.height)
        throw std::invalid_argument("convolve2d: kernel must be smaller than the image");
    detail::FftConvolver conv(image.height, image.width, kernel, kernel_size);
    return conv.apply(image, to_pad(boundary));
}

RealImage convolve2d(const RealImage& image, const PsfKernel& kernel, Boundary boundary) {
    return convolve2d(image, kernel.values, kernel.size, boundary);
}

Image16 apply_poisson(const RealImage& image, double gain, uint64_t seed) {
    if (!(gain > 0)) throw std::domain_error("apply_poisson: gain must be positive");
    for (double v : image.data)
        if (!std::isfinite(v)) throw std::domain_error("apply_poisson: non-finite pixel");

    Image16 out(image.width, image.height);
    const long n = static_cast<long>(image.size());
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (long i = 0; i < n; ++i) {
        const double mean = gain * image.data[i];
        if (mean <= 0.0) {
            out.data[i] = 0;
            continue;
        }
        Xoshiro256 eng(derive_seed(seed, static_cast<uint64_t>(i)));
        std::poisson_distribution<long long> dist(mean);
        double v = std::round(static_cast<double>(dist(eng)) / gain);
        if (v < 0.0) v = 0.0;
        if (v > 65535.0) v = 65535.0;
        out.data[i] = static_cast<uint16_t>(v);
    }
    return out;
}

Image16 synthesize_defocused(const Image16& in_focus, const PsfKernel& kernel, double gain,
                             uint64_t seed) {
    if (kernel.level.index == 0) return in_focus;  // clean reference: no blur, no noise
    const RealImage blurred = convolve2d(to_real(in_focus), kernel, Boundary::reflect);
    return apply_poisson(blurred, gain, seed);
}

Image16 synthesize_defocused(const Image16& in_focus, const DefocusLevel& level,
                             const OpticalConfig& cfg, double gain, uint64_t seed) {
    if (level.index == 0) return in_focus;
    return synthesize_defocused(in_focus, build_psf_kernel(level, cfg), gain, seed);
}

}  // namespace defocus
