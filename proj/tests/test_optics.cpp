#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "defocus/errors.hpp"
#include "defocus/optics.hpp"
#include "defocus/pgm.hpp"
#include "defocus/reference.hpp"

using namespace defocus;

namespace {

double rel_diff(double a, double b) {
    const double scale = std::max(std::fabs(a), std::fabs(b));
    return scale == 0.0 ? 0.0 : std::fabs(a - b) / scale;
}

// Second moment of a kernel about its center, in pixel^2.
double second_moment(const PsfKernel& k) {
    const int r = k.radius();
    double m = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) m += k.at(x + r, y + r) * (x * x + y * y);
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("optics");

TEST_CASE("bessel_j0 basics") {
    CHECK(bessel_j0(0.0) == 1.0);
    CHECK(std::fabs(bessel_j0(2.404825557695773)) < 1e-9);  // first zero
    CHECK(bessel_j0(1.0) == doctest::Approx(0.7651976866).epsilon(1e-9));
    CHECK(bessel_j0(-3.0) == bessel_j0(3.0));
    CHECK_THROWS_AS(bessel_j0(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
    CHECK_THROWS_AS(bessel_j0(std::numeric_limits<double>::infinity()), std::domain_error);
}

TEST_CASE("bessel_j0 against the series oracle on [0, 25]") {
    for (double x = 0.0; x <= 25.0; x += 0.173) {
        CHECK(std::fabs(bessel_j0(x) - ref::bessel_j0_series(x)) < 1e-10);
    }
}

TEST_CASE("bessel_j0 against precomputed references up to 200") {
    // 40-digit arbitrary-precision values.
    const struct {
        double x, j0;
    } table[] = {
        {0.5, 0.9384698072408129042284},
        {1.0, 0.7651976865579665514497},
        {2.0, 0.2238907791412356680518},
        {3.0, -0.2600519549019334376242},
        {5.0, -0.1775967713143383043474},
        {7.9, 0.1943618448412782396948},
        {8.0, 0.1716508071375539060909},
        {8.1, 0.1475174540443776702987},
        {9.5, -0.1939287476874223554005},
        {11.0, -0.1711903004071960883458},
        {12.0, 0.04768931079683353662381},
        {12.5, 0.1468840547004211023064},
        {14.0, 0.1710734761104586590631},
        {20.0, 0.1670246643405831547273},
        {31.4, 0.09865374409157311780323},
        {50.0, 0.05581232766925181500475},
        {75.0, 0.03464391380509705613738},
        {100.0, 0.01998585030422312242423},
        {137.0, -0.02937965982820201629355},
        {166.5, -0.04349745010555186609749},
        {200.0, -0.01543743993056509159192},
    };
    for (const auto& entry : table) {
        CHECK_MESSAGE(std::fabs(bessel_j0(entry.x) - entry.j0) < 1e-9, "x = ", entry.x);
        CHECK_MESSAGE(std::fabs(bessel_j0(-entry.x) - entry.j0) < 1e-9, "x = -", entry.x);
    }
}

TEST_CASE("psf_value on axis") {
    OpticalConfig cfg;

    SUBCASE("focused value is exactly the analytic 1/4") {
        CHECK(psf_value(0.0, 0.0, cfg) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(on_axis_psf(0.0, cfg) == 0.25);
    }

    SUBCASE("defocused on-axis values match the closed form at every level") {
        for (int level = 0; level < cfg.num_levels; ++level) {
            const double z = level * cfg.level_step_um;
            const double quad = psf_value(0.0, z, cfg);
            const double analytic = on_axis_psf(z, cfg);
            CHECK_MESSAGE(rel_diff(quad, analytic) < 1e-8, "level ", level);
        }
    }

    SUBCASE("first on-axis null at a = 4 pi") {
        const double na_over_n = cfg.numerical_aperture / cfg.refractive_index;
        const double z_null = 4.0 * std::numbers::pi /
                              (cfg.wavenumber_per_um() * na_over_n * na_over_n);
        CHECK(on_axis_psf(z_null, cfg) == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("psf_value properties") {
    OpticalConfig cfg;

    SUBCASE("negative radius rejected") {
        CHECK_THROWS_AS(psf_value(-1.0, 0.0, cfg), std::domain_error);
    }

    SUBCASE("even in z") {
        for (double r : {0.0, 0.65, 1.3, 3.25}) {
            const double plus = psf_value(r, 2.0, cfg);
            const double minus = psf_value(r, -2.0, cfg);
            CHECK(std::fabs(plus - minus) < 1e-10);
        }
    }

    SUBCASE("non-negative and finite over the sampling range") {
        for (double r = 0.0; r < 20.0; r += 0.65) {
            for (int level = 0; level < cfg.num_levels; level += 5) {
                const double v = psf_value(r, level * cfg.level_step_um, cfg);
                CHECK(v >= 0.0);
                CHECK(std::isfinite(v));
            }
        }
    }
}

TEST_CASE("quadrature converges under node doubling") {
    OpticalConfig cfg;
    // Compare the adaptive result against a rule with twice as many nodes as
    // a deliberately generous fixed count, across the radii kernels sample.
    for (int level : {0, 3, 10}) {
        const double z = level * cfg.level_step_um;
        for (double r_px : {0.0, 1.0, 5.0, 13.0, 27.5}) {
            const double r = r_px * cfg.pixel_pitch_um;
            const double fine = psf_value_fixed_nodes(r, z, cfg, 2048);
            const double finer = psf_value_fixed_nodes(r, z, cfg, 4096);
            CHECK(rel_diff(fine, finer) < 1e-8);
            const double adaptive = psf_value(r, z, cfg);
            CHECK(rel_diff(adaptive, finer) < 1e-8);
        }
    }
}

TEST_CASE("kernel construction") {
    OpticalConfig cfg;

    SUBCASE("level 0 peaks strictly at the center") {
        const PsfKernel k = build_psf_kernel(DefocusLevel::at(0, cfg), cfg);
        const int c = k.radius();
        const double center = k.at(c, c);
        for (int y = 0; y < k.size; ++y)
            for (int x = 0; x < k.size; ++x)
                if (x != c || y != c) CHECK(k.at(x, y) < center);
    }

    SUBCASE("unit sum and exact symmetry at every level") {
        for (int level = 0; level < cfg.num_levels; ++level) {
            const PsfKernel k = build_psf_kernel(DefocusLevel::at(level, cfg), cfg);
            CHECK(k.size % 2 == 1);
            double sum = 0.0;
            for (double v : k.values) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
            const int c = k.radius();
            for (int y = 0; y <= c; ++y)
                for (int x = 0; x <= c; ++x) {
                    const double v = k.at(c + x, c + y);
                    CHECK(k.at(c - x, c - y) == v);
                    CHECK(k.at(c + y, c + x) == v);
                    CHECK(k.at(c - x, c + y) == v);
                }
        }
    }

    SUBCASE("defocus spreads the kernel") {
        const PsfKernel k1 = build_psf_kernel(DefocusLevel::at(1, cfg), cfg);
        const PsfKernel k5 = build_psf_kernel(DefocusLevel::at(5, cfg), cfg);
        const PsfKernel k10 = build_psf_kernel(DefocusLevel::at(10, cfg), cfg);
        CHECK(second_moment(k5) > second_moment(k1));
        CHECK(k10.size > k1.size);
    }

    SUBCASE("radius cap produces a kernel-size error naming the level") {
        OpticalConfig tight = cfg;
        tight.kernel_radius_cap_px = 3;
        try {
            build_psf_kernel(DefocusLevel::at(10, tight), tight);
            FAIL("expected KernelSizeError");
        } catch (const KernelSizeError& e) {
            CHECK(e.level() == 10);
        }
    }

    SUBCASE("level index outside the configured range is rejected") {
        CHECK_THROWS_AS(DefocusLevel::at(11, cfg), std::invalid_argument);
        CHECK_THROWS_AS(DefocusLevel::at(-1, cfg), std::invalid_argument);
    }
}

TEST_CASE("kernel export writes a PGM and sidecar") {
    OpticalConfig cfg;
    const PsfKernel k = build_psf_kernel(DefocusLevel::at(2, cfg), cfg);
    const auto dir = std::filesystem::temp_directory_path() / "defocus_test_kernel";
    std::filesystem::create_directories(dir);
    export_kernel_pgm(k, dir / "k2.pgm", dir / "k2.txt");
    const Image16 img = read_pgm(dir / "k2.pgm");
    CHECK(img.width == k.size);
    CHECK(img.height == k.size);
    // Peak rescales to full range.
    uint16_t maxv = 0;
    for (uint16_t v : img.data) maxv = std::max(maxv, v);
    CHECK(maxv == 65535);
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
