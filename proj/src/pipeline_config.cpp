#include "defocus/pipeline_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "defocus/errors.hpp"

namespace defocus {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

template <class T>
T parse_as(const std::string& value) {
    std::istringstream ss(value);
    T out;
    ss >> out;
    if (!ss || !(ss >> std::ws).eof())
        throw std::invalid_argument("unparsable config value '" + value + "'");
    return out;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
    using Setter = std::function<void(PipelineConfig&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"optics.wavelength_nm", [](auto& c, auto& v) { c.optics.wavelength_nm = parse_as<double>(v); }},
        {"optics.numerical_aperture", [](auto& c, auto& v) { c.optics.numerical_aperture = parse_as<double>(v); }},
        {"optics.refractive_index", [](auto& c, auto& v) { c.optics.refractive_index = parse_as<double>(v); }},
        {"optics.pixel_pitch_um", [](auto& c, auto& v) { c.optics.pixel_pitch_um = parse_as<double>(v); }},
        {"optics.level_step_um", [](auto& c, auto& v) { c.optics.level_step_um = parse_as<double>(v); }},
        {"optics.num_levels", [](auto& c, auto& v) { c.optics.num_levels = parse_as<int>(v); }},
        {"optics.kernel_radius_cap_px", [](auto& c, auto& v) { c.optics.kernel_radius_cap_px = parse_as<int>(v); }},
        {"train.learning_rate", [](auto& c, auto& v) { c.train.learning_rate = parse_as<double>(v); }},
        {"train.lr_decay", [](auto& c, auto& v) { c.train.lr_decay = parse_as<double>(v); }},
        {"train.batch_size", [](auto& c, auto& v) { c.train.batch_size = parse_as<int>(v); }},
        {"train.epochs", [](auto& c, auto& v) { c.train.epochs = parse_as<int>(v); }},
        {"train.bn_momentum", [](auto& c, auto& v) { c.train.hyper.bn_momentum = parse_as<double>(v); }},
        {"train.dropout_pool", [](auto& c, auto& v) { c.train.hyper.dropout_pool = parse_as<double>(v); }},
        {"train.dropout_dense", [](auto& c, auto& v) { c.train.hyper.dropout_dense = parse_as<double>(v); }},
        {"restore.iterations", [](auto& c, auto& v) { c.restore.iterations = parse_as<int>(v); }},
        {"restore.stop_rel_change", [](auto& c, auto& v) { c.restore.stop_rel_change = parse_as<double>(v); }},
        {"restore.stride", [](auto& c, auto& v) { c.restore_stride = parse_as<int>(v); }},
        {"synth.gain", [](auto& c, auto& v) { c.synth_gain = parse_as<double>(v); }},
        {"synth.crops_per_level", [](auto& c, auto& v) { c.crops_per_level = parse_as<int>(v); }},
        {"synth.bg_max_threshold", [](auto& c, auto& v) { c.bg_max_threshold = parse_as<int>(v); }},
        {"synth.bg_range_threshold", [](auto& c, auto& v) { c.bg_range_threshold = parse_as<int>(v); }},
        {"seed", [](auto& c, auto& v) { c.seed = parse_as<uint64_t>(v); }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(*this, value);
}

void PipelineConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path.string() + ": cannot open config");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void PipelineConfig::write_resolved(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out << "optics.wavelength_nm = " << optics.wavelength_nm << "\n"
        << "optics.numerical_aperture = " << optics.numerical_aperture << "\n"
        << "optics.refractive_index = " << optics.refractive_index << "\n"
        << "optics.pixel_pitch_um = " << optics.pixel_pitch_um << "\n"
        << "optics.level_step_um = " << optics.level_step_um << "\n"
        << "optics.num_levels = " << optics.num_levels << "\n"
        << "optics.kernel_radius_cap_px = " << optics.kernel_radius_cap_px << "\n"
        << "train.learning_rate = " << train.learning_rate << "\n"
        << "train.lr_decay = " << train.lr_decay << "\n"
        << "train.batch_size = " << train.batch_size << "\n"
        << "train.epochs = " << train.epochs << "\n"
        << "train.bn_momentum = " << train.hyper.bn_momentum << "\n"
        << "train.dropout_pool = " << train.hyper.dropout_pool << "\n"
        << "train.dropout_dense = " << train.hyper.dropout_dense << "\n"
        << "restore.iterations = " << restore.iterations << "\n"
        << "restore.stop_rel_change = " << restore.stop_rel_change << "\n"
        << "restore.stride = " << restore_stride << "\n"
        << "synth.gain = " << synth_gain << "\n"
        << "synth.crops_per_level = " << crops_per_level << "\n"
        << "synth.bg_max_threshold = " << bg_max_threshold << "\n"
        << "synth.bg_range_threshold = " << bg_range_threshold << "\n"
        << "seed = " << seed << "\n";
}

}  // namespace defocus
