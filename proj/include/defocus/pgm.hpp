#pragma once

#include <filesystem>

#include "defocus/image.hpp"

namespace defocus {

// Binary PGM (P5). This project always writes maxval 65535 big-endian;
// the reader additionally accepts maxval 255 and widens samples by x257.
Image16 read_pgm(const std::filesystem::path& path);

// Canonical header "P5\n<w> <h>\n65535\n" followed by big-endian samples.
// read_pgm(write_pgm(x)) == x bitwise.
void write_pgm(const Image16& img, const std::filesystem::path& path);

}  // namespace defocus
