#pragma once

#include <filesystem>
#include <string>

#include "defocus/delpnet.hpp"
#include "defocus/optics.hpp"
#include "defocus/restore.hpp"

namespace defocus {

// Merged run configuration: `key = value` lines, '#' comments, unknown keys
// rejected. Flags override file values; every command writes the resolved
// view next to its outputs.
struct PipelineConfig {
    OpticalConfig optics;
    TrainConfig train;
    RlOptions restore;
    int restore_stride = 42;
    double synth_gain = 1.0;
    int crops_per_level = 20;
    uint64_t seed = 1;
    int bg_max_threshold = 230;
    int bg_range_threshold = 30;

    // Applies one key=value assignment; throws std::invalid_argument on an
    // unknown key or unparsable value.
    void set(const std::string& key, const std::string& value);

    void load_file(const std::filesystem::path& path);
    void write_resolved(const std::filesystem::path& path) const;
};

}  // namespace defocus
