#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "defocus/csv.hpp"
#include "defocus/errors.hpp"
#include "defocus/pgm.hpp"
#include "defocus/pipeline_config.hpp"
#include "defocus/rng.hpp"

using namespace defocus;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "defocus_test_io";
    std::filesystem::create_directories(dir);
    return dir;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("pgm decodes big-endian 16-bit samples") {
    const auto p = temp_dir() / "one.pgm";
    write_bytes(p, std::string("P5\n1 1\n65535\n") + '\x12' + '\x34');
    const Image16 img = read_pgm(p);
    CHECK(img.width == 1);
    CHECK(img.height == 1);
    CHECK(img.data[0] == 0x1234);
}

TEST_CASE("pgm widens 8-bit samples by 257") {
    const auto p = temp_dir() / "eight.pgm";
    write_bytes(p, std::string("P5\n2 1\n255\n") + '\xFF' + '\x01');
    const Image16 img = read_pgm(p);
    CHECK(img.data[0] == 65535);
    CHECK(img.data[1] == 257);
}

TEST_CASE("pgm header comments are skipped") {
    const auto p = temp_dir() / "comment.pgm";
    write_bytes(p, std::string("P5\n# a comment\n1 1\n65535\n") + '\x00' + '\x2A');
    CHECK(read_pgm(p).data[0] == 42);
}

TEST_CASE("pgm format errors carry a byte offset") {
    const auto dir = temp_dir();
    write_bytes(dir / "magic.pgm", "P6\n1 1\n65535\nxx");
    CHECK_THROWS_AS(read_pgm(dir / "magic.pgm"), FormatError);

    write_bytes(dir / "trunc.pgm", std::string("P5\n2 2\n65535\n") + '\x00');
    try {
        read_pgm(dir / "trunc.pgm");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }

    write_bytes(dir / "maxval.pgm", "P5\n1 1\n1023\n..");
    CHECK_THROWS_AS(read_pgm(dir / "maxval.pgm"), FormatError);
}

TEST_CASE("pgm writer emits the canonical header") {
    const auto p = temp_dir() / "canon.pgm";
    Image16 img(696, 520);
    write_pgm(img, p);
    std::ifstream in(p, std::ios::binary);
    std::string head(16, '\0');
    in.read(head.data(), 16);
    CHECK(head == "P5\n696 520\n65535");
}

TEST_CASE("pgm round-trip is bit exact") {
    const auto p = temp_dir() / "roundtrip.pgm";
    Xoshiro256 rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        Image16 img(1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(40)));
        for (auto& v : img.data) v = static_cast<uint16_t>(rng.below(65536));
        write_pgm(img, p);
        const Image16 back = read_pgm(p);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.data == img.data);
    }
}

TEST_CASE("pgm writer rejects empty images") {
    CHECK_THROWS_AS(write_pgm(Image16(), temp_dir() / "empty.pgm"), std::invalid_argument);
}

TEST_CASE("csv round-trip and formatting") {
    const auto p = temp_dir() / "table.csv";
    write_csv(p, {{"a", "b"}, {"1", "2.5"}, {"3", "inf"}});
    const auto rows = read_csv(p);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == CsvRow{"1", "2.5"});
    CHECK(rows[2][1] == "inf");

    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(2.5) == "2.5");
}

TEST_CASE("pipeline config parses, rejects unknown keys, writes resolved form") {
    const auto dir = temp_dir();
    {
        std::ofstream out(dir / "run.cfg");
        out << "# comment line\n"
            << "optics.num_levels = 5\n"
            << "train.epochs = 3   # trailing comment\n"
            << "seed = 99\n";
    }
    PipelineConfig cfg;
    cfg.load_file(dir / "run.cfg");
    CHECK(cfg.optics.num_levels == 5);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.seed == 99);

    CHECK_THROWS_AS(cfg.set("optics.bogus", "1"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.set("train.epochs", "three"), std::invalid_argument);

    cfg.write_resolved(dir / "resolved.cfg");
    PipelineConfig reread;
    reread.load_file(dir / "resolved.cfg");
    CHECK(reread.optics.num_levels == 5);
    CHECK(reread.train.epochs == 3);
    CHECK(reread.seed == 99);
}

TEST_SUITE_END();
