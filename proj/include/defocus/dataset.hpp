#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "defocus/image.hpp"
#include "defocus/optics.hpp"

namespace defocus {

constexpr int kPatchSize = 84;
constexpr int kBgLabel = 11;  // 12th class: patch is almost all background

// Normalized patch ready for the classifier, with provenance.
struct LabeledPatch {
    std::vector<float> pixels;  // kPatchSize^2 values in [0,1]
    int label = 0;              // 0..10 defocus level, 11 = bg
    int level = 0;              // true synthesis level (kept for bg patches)
    std::string id;
    std::string source;
    int offset_x = 0, offset_y = 0;
    uint64_t seed = 0;
};

struct DatasetSplit {
    std::vector<std::string> train, val, test;
    uint64_t seed = 0;
};

// Index of the frame with maximal intensity standard deviation (ties to the
// lowest index). Blur flattens contrast, so this picks the in-focus frame.
int select_in_focus(const std::vector<Image16>& stack);

// Deterministic shuffle then contiguous partition by whole source image.
// val and test take floor(n * ratio); train receives the remainder.
DatasetSplit split_dataset(std::vector<std::string> ids, const std::array<double, 3>& ratios,
                           uint64_t seed);

// count random top-left offsets over the valid positions (duplicates allowed).
std::vector<std::pair<int, int>> crop_patches(const Image16& image, int count, int size,
                                              uint64_t seed);

// true iff max < max_threshold and (max - min) < range_threshold on raw
// 16-bit values.
bool label_bg(const Image16& patch, int max_threshold = 230, int range_threshold = 30);

// Per-patch min-max scaling to [0,1]; constant patches map to all zeros.
std::vector<float> normalize_patch(const Image16& patch);

struct DatasetBuildConfig {
    std::vector<int> levels;  // empty = all levels 0..num_levels-1
    int crops_per_level = 20;
    double gain = 1.0;
    uint64_t seed = 0;
    std::array<double, 3> ratios{0.75, 0.15, 0.10};
    int bg_max_threshold = 230;
    int bg_range_threshold = 30;
    bool relabel_bg = true;
};

// Synthesizes every (image, level) pair, crops, labels (bg override), and
// persists the patch store: train/ val/ test/ directories holding raw 16-bit
// patch PGMs plus an index.csv, and a top-level synthesis manifest.
void build_dataset(const std::vector<std::pair<std::string, Image16>>& sources,
                   const OpticalConfig& optics, const DatasetBuildConfig& cfg,
                   const std::filesystem::path& out_dir);

// Loads one split directory (index.csv + patch PGMs), normalizing each patch.
std::vector<LabeledPatch> load_split(const std::filesystem::path& split_dir);

}  // namespace defocus
