#include "defocus/restore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "defocus/dataset.hpp"
#include "defocus/forward_model.hpp"
#include "defocus/threading.hpp"
#include "fft_conv.hpp"

namespace defocus {

RealImage richardson_lucy(const RealImage& observed, const PsfKernel& psf, int iterations,
                          double stop_rel_change) {
    if (iterations < 0) throw std::invalid_argument("richardson_lucy: negative iteration count");
    for (double v : observed.data)
        if (v < 0.0 || !std::isfinite(v))
            throw std::domain_error("richardson_lucy: observed image has negative pixels");
    if (iterations == 0) return observed;

    detail::FftConvolver conv_psf(observed.height, observed.width, psf.values, psf.size);
    std::vector<double> flipped(psf.values.rbegin(), psf.values.rend());
    detail::FftConvolver conv_flip(observed.height, observed.width, flipped, psf.size);

    constexpr double kFloor = 1e-12;
    RealImage estimate = observed;
    RealImage ratio(observed.width, observed.height);
    for (int it = 0; it < iterations; ++it) {
        const RealImage blurred = conv_psf.apply(estimate, detail::Pad::reflect);
        for (size_t i = 0; i < ratio.data.size(); ++i)
            ratio.data[i] = observed.data[i] / std::max(blurred.data[i], kFloor);
        const RealImage correction = conv_flip.apply(ratio, detail::Pad::reflect);
        double max_rel = 0.0;
        for (size_t i = 0; i < estimate.data.size(); ++i) {
            const double prev = estimate.data[i];
            estimate.data[i] = prev * correction.data[i];
            if (stop_rel_change > 0.0 && prev > kFloor)
                max_rel = std::max(max_rel, std::fabs(estimate.data[i] - prev) / prev);
        }
        if (stop_rel_change > 0.0 && max_rel < stop_rel_change) break;
    }
    return estimate;
}

std::vector<double> triangular_weight(int patch_size, int stride) {
    if (stride < 1 || stride > patch_size)
        throw std::invalid_argument("triangular_weight: stride outside [1, patch_size]");
    std::vector<double> profile(patch_size);
    if (stride == patch_size) {
        std::fill(profile.begin(), profile.end(), 1.0);  // rectangular case
        return profile;
    }
    const double half = patch_size / 2.0;
    const double height = static_cast<double>(stride) / half;
    const double center = (patch_size - 1) / 2.0;
    for (int i = 0; i < patch_size; ++i)
        profile[i] = height * (1.0 - std::fabs(i - center) / half);
    return profile;
}

namespace {

int padded_extent(int image_extent, int patch, int stride) {
    if (image_extent < patch) return patch;
    const int steps = (image_extent - patch + stride - 1) / stride;
    return patch + steps * stride;
}

int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

}  // namespace

RealImage pad_for_plan(const Image16& image, const RestorationPlan& plan) {
    RealImage padded(plan.padded_w, plan.padded_h);
    for (int y = 0; y < plan.padded_h; ++y)
        for (int x = 0; x < plan.padded_w; ++x)
            padded.at(x, y) = image.at(mirror_index(x, image.width), mirror_index(y, image.height));
    return padded;
}

RestorationPlan plan_restoration(const Image16& image, int stride,
                                 const PatchPredictor& predictor) {
    if (image.width < kPatchSize || image.height < kPatchSize)
        throw std::invalid_argument("plan_restoration: image smaller than one patch");
    if (stride < 1 || stride > kPatchSize)
        throw std::invalid_argument("plan_restoration: stride outside [1, 84]");

    RestorationPlan plan;
    plan.patch_size = kPatchSize;
    plan.stride = stride;
    plan.image_w = image.width;
    plan.image_h = image.height;
    plan.padded_w = padded_extent(image.width, kPatchSize, stride);
    plan.padded_h = padded_extent(image.height, kPatchSize, stride);
    plan.weight_profile = triangular_weight(kPatchSize, stride);

    for (int oy = 0; oy + kPatchSize <= plan.padded_h; oy += stride)
        for (int ox = 0; ox + kPatchSize <= plan.padded_w; ox += stride)
            plan.grid.emplace_back(ox, oy);

    const RealImage padded = pad_for_plan(image, plan);
    plan.labels.assign(plan.grid.size(), 0);
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
    for (long i = 0; i < static_cast<long>(plan.grid.size()); ++i) {
        const auto [ox, oy] = plan.grid[i];
        plan.labels[i] = predictor(crop(padded, ox, oy, kPatchSize, kPatchSize));
    }
    return plan;
}

Image16 awdvd(const Image16& image, const RestorationPlan& plan,
              const std::vector<PsfKernel>& kernels_by_level, const RlOptions& options) {
    if (plan.grid.size() != plan.labels.size())
        throw std::invalid_argument("awdvd: plan labels do not cover the grid");
    const int patch = plan.patch_size;
    const RealImage padded = pad_for_plan(image, plan);

    // Deconvolve every patch up front (independent work), then accumulate in
    // grid order so the result does not depend on thread scheduling.
    std::vector<RealImage> restored(plan.grid.size());
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
    for (long i = 0; i < static_cast<long>(plan.grid.size()); ++i) {
        const auto [ox, oy] = plan.grid[i];
        RealImage raw = crop(padded, ox, oy, patch, patch);
        int label = plan.labels[i];
        if (label != kBgLabel && options.force_level >= 0) label = options.force_level;
        const bool passthrough =
            label == kBgLabel || (label == 0 && options.force_level < 0);
        if (passthrough) {
            restored[i] = std::move(raw);  // bg and in-focus patches pass through
        } else {
            if (label < 0 || label >= static_cast<int>(kernels_by_level.size()))
                throw std::invalid_argument("awdvd: no kernel for predicted level " +
                                            std::to_string(label));
            restored[i] = richardson_lucy(raw, kernels_by_level[label], options.iterations,
                                          options.stop_rel_change);
        }
    }

    RealImage accumulator(plan.padded_w, plan.padded_h);
    RealImage weight_map(plan.padded_w, plan.padded_h);
    const auto& profile = plan.weight_profile;
    for (size_t i = 0; i < plan.grid.size(); ++i) {
        const auto [ox, oy] = plan.grid[i];
        for (int y = 0; y < patch; ++y) {
            const double wy = profile[y];
            double* acc_row = &accumulator.at(ox, oy + y);
            double* wm_row = &weight_map.at(ox, oy + y);
            const double* src_row = &restored[i].at(0, y);
            for (int x = 0; x < patch; ++x) {
                const double w = wy * profile[x];
                acc_row[x] += w * src_row[x];
                wm_row[x] += w;
            }
        }
    }

    Image16 out(plan.image_w, plan.image_h);
    for (int y = 0; y < plan.image_h; ++y)
        for (int x = 0; x < plan.image_w; ++x) {
            const double w = weight_map.at(x, y);
            if (!(w > 0.0))
                throw std::logic_error("awdvd: zero blend weight at pixel (" + std::to_string(x) +
                                       "," + std::to_string(y) + ")");
            double v = std::round(accumulator.at(x, y) / w);
            out.at(x, y) = static_cast<uint16_t>(std::clamp(v, 0.0, 65535.0));
        }
    return out;
}

}  // namespace defocus
