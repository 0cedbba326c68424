#pragma once

#include <functional>
#include <vector>

#include "defocus/image.hpp"
#include "defocus/optics.hpp"

namespace defocus {

struct RlOptions {
    int iterations = 30;
    // When positive, stop once the largest relative pixel change in one
    // iteration falls below this value.
    double stop_rel_change = 0.0;
    // When >= 0, deconvolve every non-bg patch with this level's kernel
    // (the depth-invariant comparison mode); -1 uses the predicted levels.
    int force_level = -1;
};

// Iterative restoration: estimate <- estimate * (flip(psf) (*) observed /
// (psf (*) estimate)), starting from the observed image. Denominator floored
// at 1e-12. Reflect boundaries throughout.
RealImage richardson_lucy(const RealImage& observed, const PsfKernel& psf, int iterations,
                          double stop_rel_change = 0.0);

// 1D triangular profile of base 84 and height stride/42; stride == patch
// yields the rectangular all-ones profile. The 2D weight is the outer
// product of this profile with itself.
std::vector<double> triangular_weight(int patch_size, int stride);

struct RestorationPlan {
    int patch_size = 0;
    int stride = 0;
    int image_w = 0, image_h = 0;    // original extent
    int padded_w = 0, padded_h = 0;  // reflect-padded so the grid fits exactly
    std::vector<std::pair<int, int>> grid;  // top-left offsets on the padded canvas
    std::vector<int> labels;                // per patch: 0..10 level, 11 = bg
    std::vector<double> weight_profile;
};

// Label source for one raw (unnormalized) patch.
using PatchPredictor = std::function<int(const RealImage& raw_patch)>;

RestorationPlan plan_restoration(const Image16& image, int stride,
                                 const PatchPredictor& predictor);

// Patch-wise deconvolution with the per-patch predicted kernels, blended on
// the weighted canvas and normalized by the accumulated weight. "bg" and
// level-0 patches pass through unchanged.
Image16 awdvd(const Image16& image, const RestorationPlan& plan,
              const std::vector<PsfKernel>& kernels_by_level, const RlOptions& options = {});

// Reflect-pad to the plan's canvas (exposed for tests and the CLI label map).
RealImage pad_for_plan(const Image16& image, const RestorationPlan& plan);

}  // namespace defocus
