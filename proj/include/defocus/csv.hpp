#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace defocus {

// Minimal CSV: comma delimiter, "\n" line endings, no quoting. All files this
// project emits are plain numeric/identifier tables, so nothing more is needed.
using CsvRow = std::vector<std::string>;

std::vector<CsvRow> read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

std::string format_double(double v);  // shortest round-trip form; "inf" for infinity

}  // namespace defocus
