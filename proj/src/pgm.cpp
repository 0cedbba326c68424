#include "defocus/pgm.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "defocus/errors.hpp"

namespace defocus {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg, long offset) {
    throw FormatError(path.string() + ": " + msg + " at byte " + std::to_string(offset));
}

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

long parse_dim(const std::string& tok, std::istream& in, const std::filesystem::path& path,
               const char* what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        fail(path, std::string("malformed ") + what, static_cast<long>(in.tellg()));
    return std::stol(tok);
}

}  // namespace

Image16 read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open");

    if (next_token(in) != "P5") fail(path, "bad magic (expected P5)", 0);
    const long w = parse_dim(next_token(in), in, path, "width");
    const long h = parse_dim(next_token(in), in, path, "height");
    const long maxval = parse_dim(next_token(in), in, path, "maxval");
    if (w <= 0 || h <= 0) fail(path, "non-positive dimensions", static_cast<long>(in.tellg()));
    if (maxval != 255 && maxval != 65535)
        fail(path, "unsupported maxval " + std::to_string(maxval), static_cast<long>(in.tellg()));

    // Exactly one whitespace byte separates maxval from the payload; next_token
    // has already consumed it.
    Image16 img(static_cast<int>(w), static_cast<int>(h));
    const size_t count = img.size();
    if (maxval == 65535) {
        std::vector<unsigned char> raw(count * 2);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<size_t>(in.gcount()) != raw.size())
            fail(path, "truncated payload", static_cast<long>(in.tellg()));
        for (size_t i = 0; i < count; ++i)
            img.data[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    } else {
        std::vector<unsigned char> raw(count);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<size_t>(in.gcount()) != raw.size())
            fail(path, "truncated payload", static_cast<long>(in.tellg()));
        for (size_t i = 0; i < count; ++i) img.data[i] = static_cast<uint16_t>(raw[i] * 257);
    }
    return img;
}

void write_pgm(const Image16& img, const std::filesystem::path& path) {
    if (img.width <= 0 || img.height <= 0 || img.data.size() != img.size())
        throw std::invalid_argument("write_pgm: empty or inconsistent image");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<unsigned char> raw(img.size() * 2);
    for (size_t i = 0; i < img.size(); ++i) {
        raw[2 * i] = static_cast<unsigned char>(img.data[i] >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(img.data[i] & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw FormatError(path.string() + ": write failed");
}

}  // namespace defocus
