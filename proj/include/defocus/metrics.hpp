#pragma once

#include <vector>

#include "defocus/image.hpp"

namespace defocus {

// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<long> counts;

    explicit ConfusionMatrix(int classes = 12)
        : num_classes(classes), counts(static_cast<size_t>(classes) * classes, 0) {}

    long& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * num_classes + pred]; }
    long at(int truth, int pred) const {
        return counts[static_cast<size_t>(truth) * num_classes + pred];
    }
    long total() const;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro
};

// 10*log10(65535^2 / MSE); +inf for identical images.
double psnr(const Image16& reference, const Image16& test);

// Mean SSIM, 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03, range 65535.
double ssim(const Image16& reference, const Image16& test);

double ssim_ratio(double deconvolved_ssim, double noisy_defocused_ssim);

ClassificationReport classification_report(const ConfusionMatrix& matrix);

// topk[k-1] = fraction of samples whose true label is among the k most
// probable classes (ties broken toward the lower class index).
std::vector<double> topk_curve(const std::vector<std::vector<double>>& probabilities,
                               const std::vector<int>& labels, int k_max);

// Among misclassified samples of an 11-defocus-level matrix, the fraction
// whose prediction is off by exactly one level. 1.0 when there are no errors.
double adjacency_error_fraction(const ConfusionMatrix& matrix);

}  // namespace defocus
