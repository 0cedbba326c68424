#include <doctest.h>

#include <cmath>

#include "defocus/dataset.hpp"
#include "defocus/forward_model.hpp"
#include "defocus/metrics.hpp"
#include "defocus/restore.hpp"
#include "defocus/rng.hpp"

using namespace defocus;

namespace {

PsfKernel delta_kernel() {
    PsfKernel k;
    k.level = DefocusLevel{0, 0.0};
    k.size = 1;
    k.pixel_pitch_um = 0.65;
    k.values = {1.0};
    return k;
}

RealImage blob_fixture(int w, int h, uint64_t seed, double background = 50.0) {
    Xoshiro256 rng(seed);
    RealImage img(w, h, background);
    for (int b = 0; b < 5; ++b) {
        const int cx = 12 + static_cast<int>(rng.below(w - 24));
        const int cy = 12 + static_cast<int>(rng.below(h - 24));
        const double amp = 5000.0 + rng.uniform() * 20000.0;
        const double sigma2 = 4.0 + rng.uniform() * 10.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                img.at(x, y) += amp * std::exp(-d2 / (2.0 * sigma2));
            }
    }
    return img;
}

// Largest |left - right| step across a vertical boundary column pair.
double cross_column_jump(const Image16& img, int col) {
    double jump = 0.0;
    for (int y = 0; y < img.height; ++y)
        jump = std::max(jump, std::fabs(static_cast<double>(img.at(col, y)) -
                                        static_cast<double>(img.at(col + 1, y))));
    return jump;
}

double max_interior_jump(const Image16& img, int skip_col) {
    double jump = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x + 1 < img.width; ++x) {
            if (x == skip_col) continue;
            jump = std::max(jump, std::fabs(static_cast<double>(img.at(x, y)) -
                                            static_cast<double>(img.at(x + 1, y))));
        }
    return jump;
}

}  // namespace

TEST_SUITE_BEGIN("restore");

TEST_CASE("richardson-lucy fixed points and guards") {
    const RealImage obs = blob_fixture(48, 40, 3);

    SUBCASE("zero iterations returns the observation") {
        const RealImage out = richardson_lucy(obs, delta_kernel(), 0);
        CHECK(out.data == obs.data);
    }

    SUBCASE("delta kernel is an exact fixed point") {
        const RealImage out = richardson_lucy(obs, delta_kernel(), 7);
        CHECK(out.data == obs.data);
    }

    SUBCASE("negative pixels are rejected") {
        RealImage bad = obs;
        bad.at(3, 3) = -1.0;
        CHECK_THROWS_AS(richardson_lucy(bad, delta_kernel(), 3), std::domain_error);
    }

    SUBCASE("negative iteration count is rejected") {
        CHECK_THROWS_AS(richardson_lucy(obs, delta_kernel(), -1), std::invalid_argument);
    }
}

TEST_CASE("richardson-lucy restores a noiseless blur") {
    OpticalConfig cfg;
    const PsfKernel k3 = build_psf_kernel(DefocusLevel::at(3, cfg), cfg);
    REQUIRE(k3.size < 64);

    double worst_gain = 1e9;
    for (uint64_t seed : {101, 102, 103}) {
        const RealImage clean = blob_fixture(64, 64, seed);
        const RealImage blurred = convolve2d(clean, k3, Boundary::reflect);
        const RealImage restored = richardson_lucy(blurred, k3, 30);

        for (double v : restored.data) CHECK(v >= 0.0);

        const Image16 clean16 = to_image16(clean);
        const double before = psnr(clean16, to_image16(blurred));
        const double after = psnr(clean16, to_image16(restored));
        worst_gain = std::min(worst_gain, after - before);
    }
    CHECK(worst_gain >= 3.0);
}

TEST_CASE("richardson-lucy keeps flux within one percent") {
    OpticalConfig cfg;
    const PsfKernel k2 = build_psf_kernel(DefocusLevel::at(2, cfg), cfg);
    // Interior-supported fixture: dark frame, centered blob.
    RealImage img(72, 72, 0.0);
    for (int y = 20; y < 52; ++y)
        for (int x = 20; x < 52; ++x) {
            const double d2 = (x - 36) * (x - 36) + (y - 36) * (y - 36);
            img.at(x, y) = 8000.0 * std::exp(-d2 / 40.0);
        }
    const RealImage blurred = convolve2d(img, k2, Boundary::reflect);
    const RealImage restored = richardson_lucy(blurred, k2, 50);
    CHECK(image_sum(restored) ==
          doctest::Approx(image_sum(blurred)).epsilon(0.01));
}

TEST_CASE("triangular weight profiles") {
    SUBCASE("stride 84 is the rectangular profile") {
        const auto w = triangular_weight(84, 84);
        for (double v : w) CHECK(v == 1.0);
    }

    SUBCASE("stride 42 peaks near one with symmetric positive samples") {
        const auto w = triangular_weight(84, 42);
        double peak = 0.0;
        for (double v : w) {
            CHECK(v > 0.0);
            peak = std::max(peak, v);
        }
        CHECK(peak == doctest::Approx(1.0 - 0.5 / 42.0));
        for (int i = 0; i < 84; ++i) CHECK(w[i] == doctest::Approx(w[83 - i]).epsilon(1e-12));
        CHECK(w[41] == peak);
    }

    SUBCASE("strides dividing 42 accumulate to a flat interior") {
        for (int stride : {1, 2, 3, 6, 7, 14, 21, 42}) {
            const auto w = triangular_weight(84, stride);
            // Accumulate shifted copies over a long 1D strip.
            const int strip = 84 * 6;
            std::vector<double> acc(strip, 0.0);
            for (int start = -84; start < strip; start += stride)
                for (int i = 0; i < 84; ++i) {
                    const int pos = start + i;
                    if (pos >= 0 && pos < strip) acc[pos] += w[i];
                }
            for (int pos = 84; pos < strip - 84; ++pos)
                CHECK_MESSAGE(std::fabs(acc[pos] - 1.0) < 1e-9, "stride ", stride, " pos ", pos);
        }
    }

    SUBCASE("stride out of range rejected") {
        CHECK_THROWS_AS(triangular_weight(84, 0), std::invalid_argument);
        CHECK_THROWS_AS(triangular_weight(84, 85), std::invalid_argument);
    }
}

TEST_CASE("plan_restoration geometry") {
    auto constant_label = [](int label) {
        return [label](const RealImage&) { return label; };
    };

    SUBCASE("single patch for an 84x84 image at stride 84") {
        const RestorationPlan plan =
            plan_restoration(Image16(84, 84, 100), 84, constant_label(0));
        REQUIRE(plan.grid.size() == 1);
        CHECK(plan.grid[0] == std::pair<int, int>{0, 0});
        CHECK(plan.padded_w == 84);
        CHECK(plan.padded_h == 84);
    }

    SUBCASE("696x520 at stride 42 enumerates a 16x12 grid") {
        const RestorationPlan plan =
            plan_restoration(Image16(696, 520, 100), 42, constant_label(2));
        CHECK(plan.grid.size() == 16u * 12u);
        CHECK(plan.padded_w == 714);
        CHECK(plan.padded_h == 546);
    }

    SUBCASE("undersized images and bad strides are rejected") {
        CHECK_THROWS_AS(plan_restoration(Image16(83, 84, 0), 42, constant_label(0)),
                        std::invalid_argument);
        CHECK_THROWS_AS(plan_restoration(Image16(84, 84, 0), 0, constant_label(0)),
                        std::invalid_argument);
        CHECK_THROWS_AS(plan_restoration(Image16(84, 84, 0), 85, constant_label(0)),
                        std::invalid_argument);
    }
}

TEST_CASE("awdvd whole-image behavior") {
    OpticalConfig cfg;
    std::vector<PsfKernel> kernels;
    for (int level = 0; level < cfg.num_levels; ++level)
        kernels.push_back(build_psf_kernel(DefocusLevel::at(level, cfg), cfg));

    const Image16 img = to_image16(blob_fixture(120, 100, 9));

    SUBCASE("all-bg plan returns the input exactly, any stride") {
        for (int stride : {21, 42, 84, 30}) {
            const RestorationPlan plan =
                plan_restoration(img, stride, [](const RealImage&) { return kBgLabel; });
            const Image16 out = awdvd(img, plan, kernels);
            CHECK(out.data == img.data);
        }
    }

    SUBCASE("level-0 plan at stride 84 is the identity path") {
        const RestorationPlan plan =
            plan_restoration(img, 84, [](const RealImage&) { return 0; });
        const Image16 out = awdvd(img, plan, kernels);
        CHECK(out.data == img.data);
    }

    SUBCASE("single patch equals direct richardson-lucy") {
        const Image16 patch = to_image16(blob_fixture(84, 84, 10));
        const RestorationPlan plan =
            plan_restoration(patch, 84, [](const RealImage&) { return 3; });
        RlOptions opt;
        opt.iterations = 8;
        const Image16 via_awdvd = awdvd(patch, plan, kernels, opt);
        const Image16 direct = to_image16(richardson_lucy(to_real(patch), kernels[3], 8));
        CHECK(via_awdvd.data == direct.data);
    }

    SUBCASE("overlapping stride removes the seam between different levels") {
        // Left half blurred at level 2, right half at level 5.
        const RealImage clean = blob_fixture(168, 84, 12);
        const RealImage left = convolve2d(clean, kernels[2], Boundary::reflect);
        const RealImage right = convolve2d(clean, kernels[5], Boundary::reflect);
        Image16 mixed(168, 84);
        for (int y = 0; y < 84; ++y)
            for (int x = 0; x < 168; ++x)
                mixed.at(x, y) = static_cast<uint16_t>(
                    std::min(65535.0, std::round(x < 84 ? left.at(x, y) : right.at(x, y))));

        RlOptions opt;
        opt.iterations = 10;

        RestorationPlan coarse = plan_restoration(mixed, 84, [](const RealImage&) { return 0; });
        for (size_t i = 0; i < coarse.grid.size(); ++i)
            coarse.labels[i] = coarse.grid[i].first + 84 <= 84 ? 2 : 5;
        const Image16 hard = awdvd(mixed, coarse, kernels, opt);

        RestorationPlan fine = plan_restoration(mixed, 42, [](const RealImage&) { return 0; });
        for (size_t i = 0; i < fine.grid.size(); ++i)
            fine.labels[i] = fine.grid[i].first + 42 < 84 ? 2 : 5;
        const Image16 soft = awdvd(mixed, fine, kernels, opt);

        const double hard_jump = cross_column_jump(hard, 83);
        const double soft_jump = cross_column_jump(soft, 83);
        CHECK(soft_jump <= hard_jump);
        CHECK(soft_jump <= max_interior_jump(soft, 83));
    }
}

TEST_SUITE_END();
