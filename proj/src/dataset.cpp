#include "defocus/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "defocus/csv.hpp"
#include "defocus/errors.hpp"
#include "defocus/forward_model.hpp"
#include "defocus/pgm.hpp"
#include "defocus/rng.hpp"
#include "defocus/threading.hpp"

namespace defocus {

int select_in_focus(const std::vector<Image16>& stack) {
    if (stack.empty()) throw std::invalid_argument("select_in_focus: empty stack");
    for (const auto& frame : stack)
        if (!frame.same_dims(stack.front()))
            throw std::invalid_argument("select_in_focus: frames differ in size");
    int best = 0;
    double best_std = -1.0;
    for (size_t i = 0; i < stack.size(); ++i) {
        const double s = image_stddev(stack[i]);
        if (s > best_std) {
            best_std = s;
            best = static_cast<int>(i);
        }
    }
    return best;
}

DatasetSplit split_dataset(std::vector<std::string> ids, const std::array<double, 3>& ratios,
                           uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0)) throw std::invalid_argument("split_dataset: ratios must be positive");
    if (std::fabs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw std::invalid_argument("split_dataset: ratios must sum to 1");
    const size_t n = ids.size();
    if (n < 3) throw std::invalid_argument("split_dataset: need at least 3 ids");

    // Fisher-Yates with the project RNG; deterministic per seed.
    Xoshiro256 eng(derive_seed(seed, 0x5147));
    for (size_t i = n - 1; i > 0; --i) {
        const size_t j = eng.below(i + 1);
        std::swap(ids[i], ids[j]);
    }

    const size_t n_val = static_cast<size_t>(std::floor(n * ratios[1]));
    const size_t n_test = static_cast<size_t>(std::floor(n * ratios[2]));
    const size_t n_train = n - n_val - n_test;

    DatasetSplit split;
    split.seed = seed;
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test.assign(ids.begin() + n_train + n_val, ids.end());
    return split;
}

std::vector<std::pair<int, int>> crop_patches(const Image16& image, int count, int size,
                                              uint64_t seed) {
    if (image.width < size || image.height < size)
        throw std::invalid_argument("crop_patches: image smaller than patch");
    Xoshiro256 eng(derive_seed(seed, 0xc207));
    std::vector<std::pair<int, int>> offsets;
    offsets.reserve(count);
    const uint64_t max_x = static_cast<uint64_t>(image.width - size) + 1;
    const uint64_t max_y = static_cast<uint64_t>(image.height - size) + 1;
    for (int i = 0; i < count; ++i) {
        const int ox = static_cast<int>(eng.below(max_x));
        const int oy = static_cast<int>(eng.below(max_y));
        offsets.emplace_back(ox, oy);
    }
    return offsets;
}

bool label_bg(const Image16& patch, int max_threshold, int range_threshold) {
    uint16_t lo = 65535, hi = 0;
    for (uint16_t v : patch.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi < max_threshold && (hi - lo) < range_threshold;
}

std::vector<float> normalize_patch(const Image16& patch) {
    uint16_t lo = 65535, hi = 0;
    for (uint16_t v : patch.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<float> out(patch.data.size(), 0.0f);
    if (hi == lo) return out;  // constant patch guard
    const float scale = 1.0f / static_cast<float>(hi - lo);
    for (size_t i = 0; i < patch.data.size(); ++i)
        out[i] = static_cast<float>(patch.data[i] - lo) * scale;
    return out;
}

namespace {

struct StoredPatch {
    Image16 pixels;
    std::string id, source;
    int level = 0, label = 0, ox = 0, oy = 0;
    uint64_t seed = 0;
};

void write_split(const std::filesystem::path& dir, const std::vector<StoredPatch>& patches) {
    std::filesystem::create_directories(dir / "patches");
    std::vector<CsvRow> index;
    index.push_back({"id", "source", "level", "label", "offset_x", "offset_y", "seed"});
    for (const auto& p : patches) {
        write_pgm(p.pixels, dir / "patches" / (p.id + ".pgm"));
        index.push_back({p.id, p.source, std::to_string(p.level), std::to_string(p.label),
                         std::to_string(p.ox), std::to_string(p.oy), std::to_string(p.seed)});
    }
    write_csv(dir / "index.csv", index);
}

}  // namespace

void build_dataset(const std::vector<std::pair<std::string, Image16>>& sources,
                   const OpticalConfig& optics, const DatasetBuildConfig& cfg,
                   const std::filesystem::path& out_dir) {
    if (sources.empty()) throw std::invalid_argument("build_dataset: no source images");
    std::vector<int> levels = cfg.levels;
    if (levels.empty())
        for (int l = 0; l < optics.num_levels; ++l) levels.push_back(l);

    std::vector<std::string> ids;
    ids.reserve(sources.size());
    for (const auto& [id, img] : sources) ids.push_back(id);
    const DatasetSplit split = split_dataset(ids, cfg.ratios, cfg.seed);

    // Kernels once per level; level synthesis reuses them across images.
    std::vector<PsfKernel> kernels;
    kernels.reserve(levels.size());
    for (int l : levels) kernels.push_back(build_psf_kernel(DefocusLevel::at(l, optics), optics));

    std::filesystem::create_directories(out_dir);
    std::ofstream manifest(out_dir / "synthesis_manifest.txt", std::ios::trunc);
    if (!manifest)
        throw FormatError((out_dir / "synthesis_manifest.txt").string() + ": cannot open");

    auto split_of = [&](const std::string& id) -> int {
        if (std::find(split.train.begin(), split.train.end(), id) != split.train.end()) return 0;
        if (std::find(split.val.begin(), split.val.end(), id) != split.val.end()) return 1;
        return 2;
    };

    std::array<std::vector<StoredPatch>, 3> buckets;
    for (const auto& [source_id, image] : sources) {
        const int bucket = split_of(source_id);
        const uint64_t image_tag = std::hash<std::string>{}(source_id);

        // Per-level synthesized images computed in parallel; everything
        // downstream is sequential so patch ids and files are stable.
        std::vector<Image16> degraded(levels.size());
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
        for (long li = 0; li < static_cast<long>(levels.size()); ++li) {
            const uint64_t synth_seed = derive_seed(cfg.seed, image_tag, 0x100 + levels[li]);
            degraded[li] = synthesize_defocused(image, kernels[li], cfg.gain, synth_seed);
        }

        for (size_t li = 0; li < levels.size(); ++li) {
            const int level = levels[li];
            const uint64_t synth_seed = derive_seed(cfg.seed, image_tag, 0x100 + level);
            manifest << source_id << " " << level << " " << synth_seed << " " << cfg.gain << "\n";

            const uint64_t crop_seed = derive_seed(cfg.seed, image_tag, 0x200 + level);
            const auto offsets = crop_patches(degraded[li], cfg.crops_per_level, kPatchSize,
                                              crop_seed);
            for (size_t ci = 0; ci < offsets.size(); ++ci) {
                StoredPatch p;
                p.pixels = crop(degraded[li], offsets[ci].first, offsets[ci].second, kPatchSize);
                p.source = source_id;
                p.level = level;
                p.label = level;
                if (cfg.relabel_bg &&
                    label_bg(p.pixels, cfg.bg_max_threshold, cfg.bg_range_threshold))
                    p.label = kBgLabel;
                p.ox = offsets[ci].first;
                p.oy = offsets[ci].second;
                p.seed = crop_seed;
                p.id = source_id + "_L" + std::to_string(level) + "_c" + std::to_string(ci);
                buckets[bucket].push_back(std::move(p));
            }
        }
    }

    write_split(out_dir / "train", buckets[0]);
    write_split(out_dir / "val", buckets[1]);
    write_split(out_dir / "test", buckets[2]);
}

std::vector<LabeledPatch> load_split(const std::filesystem::path& split_dir) {
    const auto rows = read_csv(split_dir / "index.csv");
    if (rows.empty() || rows.front().size() != 7)
        throw FormatError((split_dir / "index.csv").string() + ": malformed index");
    std::vector<LabeledPatch> patches;
    patches.reserve(rows.size() - 1);
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 7)
            throw FormatError((split_dir / "index.csv").string() + ": malformed row " +
                              std::to_string(i));
        LabeledPatch p;
        p.id = row[0];
        p.source = row[1];
        p.level = std::stoi(row[2]);
        p.label = std::stoi(row[3]);
        p.offset_x = std::stoi(row[4]);
        p.offset_y = std::stoi(row[5]);
        p.seed = std::stoull(row[6]);
        const Image16 raw = read_pgm(split_dir / "patches" / (p.id + ".pgm"));
        if (raw.width != kPatchSize || raw.height != kPatchSize)
            throw FormatError(p.id + ": patch is not 84x84");
        p.pixels = normalize_patch(raw);
        patches.push_back(std::move(p));
    }
    return patches;
}

}  // namespace defocus
