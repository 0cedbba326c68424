#include "fft_conv.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "defocus/threading.hpp"

namespace defocus::detail {

namespace {

// FFTW plan creation is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

}  // namespace

int next_fast_size(int n) {
    for (int candidate = n;; ++candidate) {
        int m = candidate;
        for (int p : {2, 3, 5})
            while (m % p == 0) m /= p;
        if (m == 1) return candidate;
    }
}

struct FftConvolver::Impl {
    int h = 0, w = 0;        // input extent
    int kr = 0;              // kernel radius
    int ph = 0, pw = 0;      // padded transform size
    int spec_w = 0;          // pw/2 + 1
    double scalar = 0.0;     // 1x1 kernels bypass the transform entirely
    bool is_scalar = false;
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    double* real_buf = nullptr;
    fftw_complex* spec_buf = nullptr;
    std::vector<double> kernel_spec;  // interleaved re/im

    ~Impl() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (inv) fftw_destroy_plan(inv);
        if (real_buf) fftw_free(real_buf);
        if (spec_buf) fftw_free(spec_buf);
    }
};

FftConvolver::FftConvolver(int image_h, int image_w, const std::vector<double>& kernel,
                           int kernel_size)
    : impl_(std::make_unique<Impl>()) {
    if (kernel_size % 2 == 0 || kernel_size < 1)
        throw std::invalid_argument("convolution kernel must be odd-sized");
    if (kernel_size > image_w || kernel_size > image_h)
        throw std::invalid_argument("convolution kernel larger than image");
    impl_->h = image_h;
    impl_->w = image_w;
    impl_->kr = kernel_size / 2;
    if (kernel_size == 1) {
        impl_->is_scalar = true;
        impl_->scalar = kernel[0];
        return;
    }
    impl_->ph = next_fast_size(image_h + kernel_size - 1);
    impl_->pw = next_fast_size(image_w + kernel_size - 1);
    impl_->spec_w = impl_->pw / 2 + 1;

    const size_t real_n = static_cast<size_t>(impl_->ph) * impl_->pw;
    const size_t spec_n = static_cast<size_t>(impl_->ph) * impl_->spec_w;
    impl_->real_buf = fftw_alloc_real(real_n);
    impl_->spec_buf = fftw_alloc_complex(spec_n);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        impl_->fwd = fftw_plan_dft_r2c_2d(impl_->ph, impl_->pw, impl_->real_buf, impl_->spec_buf,
                                          FFTW_ESTIMATE);
        impl_->inv = fftw_plan_dft_c2r_2d(impl_->ph, impl_->pw, impl_->spec_buf, impl_->real_buf,
                                          FFTW_ESTIMATE);
    }
    if (!impl_->fwd || !impl_->inv) throw std::runtime_error("FFTW plan creation failed");

    // Kernel spectrum, kernel anchored at the padded origin.
    std::memset(impl_->real_buf, 0, real_n * sizeof(double));
    for (int y = 0; y < kernel_size; ++y)
        for (int x = 0; x < kernel_size; ++x)
            impl_->real_buf[static_cast<size_t>(y) * impl_->pw + x] =
                kernel[static_cast<size_t>(y) * kernel_size + x];
    fftw_execute(impl_->fwd);
    impl_->kernel_spec.resize(spec_n * 2);
    for (size_t i = 0; i < spec_n; ++i) {
        impl_->kernel_spec[2 * i] = impl_->spec_buf[i][0];
        impl_->kernel_spec[2 * i + 1] = impl_->spec_buf[i][1];
    }
}

FftConvolver::~FftConvolver() = default;

RealImage FftConvolver::apply(const RealImage& image, Pad pad) const {
    const Impl& s = *impl_;
    if (image.height != s.h || image.width != s.w)
        throw std::invalid_argument("FftConvolver: image extent mismatch");

    if (s.is_scalar) {
        RealImage out = image;
        if (s.scalar != 1.0)
            for (double& v : out.data) v = std::max(0.0, v * s.scalar);
        return out;
    }

    const size_t real_n = static_cast<size_t>(s.ph) * s.pw;
    const size_t spec_n = static_cast<size_t>(s.ph) * s.spec_w;
    double* real_buf = fftw_alloc_real(real_n);
    fftw_complex* spec_buf = fftw_alloc_complex(spec_n);

    // Border-extended image occupies rows/cols [0, h+2kr); the rest is zero.
    std::memset(real_buf, 0, real_n * sizeof(double));
    const int eh = s.h + 2 * s.kr, ew = s.w + 2 * s.kr;
#pragma omp parallel for num_threads(max_threads()) if (eh > 256)
    for (int y = 0; y < eh; ++y) {
        const int sy = y - s.kr;
        double* row = real_buf + static_cast<size_t>(y) * s.pw;
        if (pad == Pad::zero && (sy < 0 || sy >= s.h)) continue;
        const int my = pad == Pad::zero ? sy : mirror_index(sy, s.h);
        for (int x = 0; x < ew; ++x) {
            const int sx = x - s.kr;
            if (pad == Pad::zero && (sx < 0 || sx >= s.w)) continue;
            const int mx = pad == Pad::zero ? sx : mirror_index(sx, s.w);
            row[x] = image.at(mx, my);
        }
    }

    fftw_execute_dft_r2c(s.fwd, real_buf, spec_buf);
    const double scale = 1.0 / (static_cast<double>(s.ph) * s.pw);
#pragma omp parallel for num_threads(max_threads()) if (spec_n > 65536)
    for (long i = 0; i < static_cast<long>(spec_n); ++i) {
        const double ar = spec_buf[i][0], ai = spec_buf[i][1];
        const double br = s.kernel_spec[2 * i], bi = s.kernel_spec[2 * i + 1];
        spec_buf[i][0] = (ar * br - ai * bi) * scale;
        spec_buf[i][1] = (ar * bi + ai * br) * scale;
    }
    fftw_execute_dft_c2r(s.inv, spec_buf, real_buf);

    // "Same" region starts at twice the kernel radius (image offset kr plus
    // kernel anchor offset kr).
    RealImage out(s.w, s.h);
    const int off = 2 * s.kr;
    for (int y = 0; y < s.h; ++y) {
        const double* row = real_buf + static_cast<size_t>(y + off) * s.pw + off;
        for (int x = 0; x < s.w; ++x) {
            // Inputs and PSF kernels are non-negative, so the exact result is
            // too; anything below zero is transform roundoff.
            out.at(x, y) = row[x] < 0.0 ? 0.0 : row[x];
        }
    }

    fftw_free(real_buf);
    fftw_free(spec_buf);
    return out;
}

}  // namespace defocus::detail
