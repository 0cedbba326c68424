#include "defocus/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace defocus::ref {

double bessel_j0_series(double x) {
    const long double q = static_cast<long double>(x) * x / 4.0L;
    long double term = 1.0L, sum = 1.0L;
    for (int k = 1; k <= 400; ++k) {
        term *= -q / (static_cast<long double>(k) * k);
        const long double prev = sum;
        sum += term;
        if (sum == prev) break;
    }
    return static_cast<double>(sum);
}

namespace {

// Symmetric half-sample extension: ... c b a | a b c ... | c b a ...
int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

}  // namespace

RealImage convolve2d_spatial(const RealImage& image, const std::vector<double>& kernel,
                             int kernel_size, Boundary boundary) {
    if (kernel_size % 2 == 0) throw std::invalid_argument("kernel size must be odd");
    const int r = kernel_size / 2;
    RealImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            double acc = 0.0;
            for (int ky = -r; ky <= r; ++ky) {
                for (int kx = -r; kx <= r; ++kx) {
                    const int sy = y - ky, sx = x - kx;
                    double v;
                    if (boundary == Boundary::zero) {
                        if (sx < 0 || sy < 0 || sx >= image.width || sy >= image.height)
                            v = 0.0;
                        else
                            v = image.at(sx, sy);
                    } else {
                        v = image.at(mirror_index(sx, image.width), mirror_index(sy, image.height));
                    }
                    acc += v * kernel[static_cast<size_t>(ky + r) * kernel_size + (kx + r)];
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

double ssim_windowed(const Image16& reference, const Image16& test) {
    if (reference.width != test.width || reference.height != test.height)
        throw std::invalid_argument("ssim_windowed: dimension mismatch");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (reference.width < kWin || reference.height < kWin)
        throw std::invalid_argument("ssim_windowed: image smaller than window");

    double window[kWin][kWin];
    double wsum = 0.0;
    for (int y = 0; y < kWin; ++y) {
        for (int x = 0; x < kWin; ++x) {
            const double dy = y - kWin / 2, dx = x - kWin / 2;
            window[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            wsum += window[y][x];
        }
    }
    for (auto& row : window)
        for (double& w : row) w /= wsum;

    const double L = 65535.0;
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);

    double total = 0.0;
    long count = 0;
    for (int oy = 0; oy + kWin <= reference.height; ++oy) {
        for (int ox = 0; ox + kWin <= reference.width; ++ox) {
            double mx = 0.0, my = 0.0;
            for (int y = 0; y < kWin; ++y)
                for (int x = 0; x < kWin; ++x) {
                    mx += window[y][x] * reference.at(ox + x, oy + y);
                    my += window[y][x] * test.at(ox + x, oy + y);
                }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int y = 0; y < kWin; ++y)
                for (int x = 0; x < kWin; ++x) {
                    const double a = reference.at(ox + x, oy + y) - mx;
                    const double b = test.at(ox + x, oy + y) - my;
                    vx += window[y][x] * a * a;
                    vy += window[y][x] * b * b;
                    cov += window[y][x] * a * b;
                }
            const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

template <class T>
std::vector<T> conv_forward_direct(const std::vector<T>& input, int n, int c, int h, int w,
                                   const std::vector<T>& weights, const std::vector<T>& bias,
                                   int oc, int k) {
    const int r = k / 2;
    std::vector<T> out(static_cast<size_t>(n) * oc * h * w, T(0));
    for (int in = 0; in < n; ++in)
        for (int o = 0; o < oc; ++o)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T acc = bias[o];
                    for (int ic = 0; ic < c; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int sy = y + ky - r, sx = x + kx - r;
                                if (sy < 0 || sx < 0 || sy >= h || sx >= w) continue;
                                const size_t ii =
                                    ((static_cast<size_t>(in) * c + ic) * h + sy) * w + sx;
                                const size_t wi =
                                    ((static_cast<size_t>(o) * c + ic) * k + ky) * k + kx;
                                acc += input[ii] * weights[wi];
                            }
                    out[((static_cast<size_t>(in) * oc + o) * h + y) * w + x] = acc;
                }
    return out;
}

template std::vector<float> conv_forward_direct<float>(const std::vector<float>&, int, int, int,
                                                       int, const std::vector<float>&,
                                                       const std::vector<float>&, int, int);
template std::vector<double> conv_forward_direct<double>(const std::vector<double>&, int, int, int,
                                                         int, const std::vector<double>&,
                                                         const std::vector<double>&, int, int);

}  // namespace defocus::ref
