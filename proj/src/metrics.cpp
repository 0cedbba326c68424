#include "defocus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "defocus/threading.hpp"

namespace defocus {

long ConfusionMatrix::total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
}

double psnr(const Image16& reference, const Image16& test) {
    if (!reference.same_dims(test)) throw std::invalid_argument("psnr: dimension mismatch");
    if (reference.data.empty()) throw std::invalid_argument("psnr: empty image");
    double se = 0.0;
    for (size_t i = 0; i < reference.data.size(); ++i) {
        const double d = static_cast<double>(reference.data[i]) - test.data[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(reference.data.size());
    return 10.0 * std::log10(65535.0 * 65535.0 / mse);
}

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_profile() {
    // 1D factor of the separable 11x11 window; the 2D weights are the outer
    // product normalized to unit sum.
    std::vector<double> g(kWin);
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    }
    return g;
}

// Valid-region separable weighted filtering: rows then columns.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                 const std::vector<double>& g) {
    const int ow = w - kWin + 1;
    std::vector<double> rows(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += g[i] * img[static_cast<size_t>(y) * w + x + i];
            rows[static_cast<size_t>(y) * ow + x] = acc;
        }
    const int oh = h - kWin + 1;
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += g[i] * rows[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Image16& reference, const Image16& test) {
    if (!reference.same_dims(test)) throw std::invalid_argument("ssim: dimension mismatch");
    if (reference.width < kWin || reference.height < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    std::vector<double> g = gaussian_profile();
    {
        // Normalize so the 2D outer product sums to exactly 1.
        double s = std::accumulate(g.begin(), g.end(), 0.0);
        for (double& v : g) v /= s;
    }

    const int w = reference.width, h = reference.height;
    const size_t n = reference.data.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        x[i] = reference.data[i];
        y[i] = test.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }

    const auto mx = filter_valid(x, w, h, g);
    const auto my = filter_valid(y, w, h, g);
    const auto mxx = filter_valid(xx, w, h, g);
    const auto myy = filter_valid(yy, w, h, g);
    const auto mxy = filter_valid(xy, w, h, g);

    const double L = 65535.0;
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);

    double total = 0.0;
    for (size_t i = 0; i < mx.size(); ++i) {
        const double vx = mxx[i] - mx[i] * mx[i];
        const double vy = myy[i] - my[i] * my[i];
        const double cov = mxy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        total += num / den;
    }
    return total / static_cast<double>(mx.size());
}

double ssim_ratio(double deconvolved_ssim, double noisy_defocused_ssim) {
    if (!(noisy_defocused_ssim > 0)) throw std::invalid_argument("ssim_ratio: zero denominator");
    return deconvolved_ssim / noisy_defocused_ssim;
}

ClassificationReport classification_report(const ConfusionMatrix& matrix) {
    const long total = matrix.total();
    if (total == 0) throw std::invalid_argument("classification_report: empty matrix");
    const int k = matrix.num_classes;

    ClassificationReport rep;
    long trace = 0;
    for (int c = 0; c < k; ++c) trace += matrix.at(c, c);
    rep.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        long col = 0, row = 0;
        for (int i = 0; i < k; ++i) {
            col += matrix.at(i, c);
            row += matrix.at(c, i);
        }
        const double p = col > 0 ? static_cast<double>(matrix.at(c, c)) / col : 0.0;
        const double r = row > 0 ? static_cast<double>(matrix.at(c, c)) / row : 0.0;
        precision_sum += p;
        recall_sum += r;
        f1_sum += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    rep.precision = precision_sum / k;
    rep.recall = recall_sum / k;
    rep.f1 = f1_sum / k;
    return rep;
}

std::vector<double> topk_curve(const std::vector<std::vector<double>>& probabilities,
                               const std::vector<int>& labels, int k_max) {
    if (probabilities.empty() || probabilities.size() != labels.size())
        throw std::invalid_argument("topk_curve: size mismatch");
    const int classes = static_cast<int>(probabilities.front().size());
    if (k_max < 1 || k_max > classes) throw std::invalid_argument("topk_curve: k_max out of range");

    std::vector<long> hits(k_max, 0);
    for (size_t s = 0; s < probabilities.size(); ++s) {
        const auto& p = probabilities[s];
        if (static_cast<int>(p.size()) != classes)
            throw std::invalid_argument("topk_curve: ragged probability rows");
        std::vector<int> order(classes);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return p[a] > p[b]; });  // ties keep lower index first
        const int label = labels[s];
        for (int k = 0; k < k_max; ++k) {
            if (order[k] == label) {
                for (int j = k; j < k_max; ++j) ++hits[j];
                break;
            }
        }
    }
    std::vector<double> curve(k_max);
    for (int k = 0; k < k_max; ++k)
        curve[k] = static_cast<double>(hits[k]) / static_cast<double>(probabilities.size());
    return curve;
}

double adjacency_error_fraction(const ConfusionMatrix& matrix) {
    long wrong = 0, adjacent = 0;
    for (int t = 0; t < matrix.num_classes; ++t)
        for (int p = 0; p < matrix.num_classes; ++p) {
            if (t == p) continue;
            wrong += matrix.at(t, p);
            if (std::abs(t - p) == 1) adjacent += matrix.at(t, p);
        }
    if (wrong == 0) return 1.0;  // vacuous: nothing was misclassified
    return static_cast<double>(adjacent) / static_cast<double>(wrong);
}

}  // namespace defocus
