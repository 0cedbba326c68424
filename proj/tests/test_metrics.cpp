#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "defocus/metrics.hpp"
#include "defocus/reference.hpp"
#include "defocus/rng.hpp"

using namespace defocus;

namespace {

Image16 random_image16(int w, int h, Xoshiro256& rng) {
    Image16 img(w, h);
    for (auto& v : img.data) v = static_cast<uint16_t>(rng.below(65536));
    return img;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("psnr arithmetic") {
    Image16 a(8, 8, 1000), b(8, 8, 1000);
    CHECK(std::isinf(psnr(a, b)));

    for (auto& v : b.data) v = 1010;
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(65535.0 * 65535.0 / 100.0))
                            .epsilon(1e-12));

    Image16 c(4, 4, 0), d(4, 4, 65535);
    CHECK(psnr(c, d) == doctest::Approx(0.0));

    SUBCASE("scaling the MSE by 100 subtracts exactly 20 dB") {
        Image16 e(8, 8, 1000), f(8, 8, 1001), g(8, 8, 1010);
        CHECK(psnr(e, f) - psnr(e, g) == doctest::Approx(20.0).epsilon(1e-12));
    }

    Image16 wrong(4, 5, 0);
    CHECK_THROWS_AS(psnr(a, wrong), std::invalid_argument);
}

TEST_CASE("ssim identities and oracle agreement") {
    Xoshiro256 rng(31);

    SUBCASE("identical images score 1") {
        const Image16 img = random_image16(24, 18, rng);
        CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("matches the brute-force windowed oracle") {
        for (int trial = 0; trial < 10; ++trial) {
            const Image16 a = random_image16(16, 16, rng);
            const Image16 b = random_image16(16, 16, rng);
            CHECK(ssim(a, b) == doctest::Approx(ref::ssim_windowed(a, b)).epsilon(1e-9));
        }
    }

    SUBCASE("symmetry") {
        const Image16 a = random_image16(20, 20, rng);
        const Image16 b = random_image16(20, 20, rng);
        CHECK(std::fabs(ssim(a, b) - ssim(b, a)) < 1e-12);
    }

    SUBCASE("inversion of a high-contrast fixture destroys similarity") {
        Image16 img(32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                img.at(x, y) = ((x / 4 + y / 4) % 2) ? 60000 : 2000;
        Image16 inverted = img;
        for (auto& v : inverted.data) v = static_cast<uint16_t>(65535 - v);
        CHECK(ssim(img, inverted) < 0.5);
        CHECK(ssim(img, inverted) == doctest::Approx(ref::ssim_windowed(img, inverted))
                                         .epsilon(1e-9));
    }

    SUBCASE("window larger than image is rejected") {
        Image16 tiny(8, 8, 0);
        CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
    }
}

TEST_CASE("ssim_ratio") {
    CHECK(ssim_ratio(0.8, 0.8) == 1.0);
    CHECK(ssim_ratio(0.88, 0.80) == doctest::Approx(1.10));
    CHECK(ssim_ratio(0.7, 0.8) < 1.0);
    CHECK_THROWS_AS(ssim_ratio(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("classification_report") {
    SUBCASE("perfect diagonal scores 1 everywhere") {
        ConfusionMatrix m(12);
        for (int c = 0; c < 12; ++c) m.at(c, c) = 5 + c;
        const auto rep = classification_report(m);
        CHECK(rep.accuracy == 1.0);
        CHECK(rep.precision == 1.0);
        CHECK(rep.recall == 1.0);
        CHECK(rep.f1 == 1.0);
    }

    SUBCASE("uniform matrix scores accuracy 1/12") {
        ConfusionMatrix m(12);
        for (auto& c : m.counts) c = 3;
        CHECK(classification_report(m).accuracy == doctest::Approx(1.0 / 12.0));
    }

    SUBCASE("hand-computed three-class case") {
        // truth 0: 2 correct, 1 predicted as 1
        // truth 1: 1 correct, 1 predicted as 2
        // truth 2: 1 correct
        ConfusionMatrix m(3);
        m.at(0, 0) = 2;
        m.at(0, 1) = 1;
        m.at(1, 1) = 1;
        m.at(1, 2) = 1;
        m.at(2, 2) = 1;
        const auto rep = classification_report(m);
        CHECK(rep.accuracy == doctest::Approx(4.0 / 6.0));
        const double p0 = 2.0 / 2.0, p1 = 1.0 / 2.0, p2 = 1.0 / 2.0;
        const double r0 = 2.0 / 3.0, r1 = 1.0 / 2.0, r2 = 1.0 / 1.0;
        CHECK(rep.precision == doctest::Approx((p0 + p1 + p2) / 3.0));
        CHECK(rep.recall == doctest::Approx((r0 + r1 + r2) / 3.0));
        const double f0 = 2 * p0 * r0 / (p0 + r0);
        const double f1 = 2 * p1 * r1 / (p1 + r1);
        const double f2 = 2 * p2 * r2 / (p2 + r2);
        CHECK(rep.f1 == doctest::Approx((f0 + f1 + f2) / 3.0));
    }

    SUBCASE("label permutation leaves macro averages unchanged") {
        ConfusionMatrix m(4), permuted(4);
        Xoshiro256 rng(8);
        const int perm[4] = {2, 0, 3, 1};
        for (int t = 0; t < 4; ++t)
            for (int p = 0; p < 4; ++p) {
                const long v = static_cast<long>(rng.below(10));
                m.at(t, p) = v;
                permuted.at(perm[t], perm[p]) = v;
            }
        m.at(0, 0) += 1;
        permuted.at(perm[0], perm[0]) += 1;
        const auto ra = classification_report(m);
        const auto rb = classification_report(permuted);
        CHECK(ra.accuracy == doctest::Approx(rb.accuracy).epsilon(1e-12));
        CHECK(ra.precision == doctest::Approx(rb.precision).epsilon(1e-12));
        CHECK(ra.recall == doctest::Approx(rb.recall).epsilon(1e-12));
        CHECK(ra.f1 == doctest::Approx(rb.f1).epsilon(1e-12));
    }

    SUBCASE("empty matrix rejected") {
        ConfusionMatrix m(3);
        CHECK_THROWS_AS(classification_report(m), std::invalid_argument);
    }
}

TEST_CASE("topk_curve") {
    SUBCASE("k equal to the class count is always 1") {
        const std::vector<std::vector<double>> probs = {{0.1, 0.2, 0.7}, {0.5, 0.3, 0.2}};
        const std::vector<int> labels = {0, 2};
        const auto curve = topk_curve(probs, labels, 3);
        CHECK(curve.back() == 1.0);
        for (size_t k = 1; k < curve.size(); ++k) CHECK(curve[k] >= curve[k - 1]);
    }

    SUBCASE("perfect classifier is 1 at k=1") {
        const std::vector<std::vector<double>> probs = {{0.9, 0.1}, {0.2, 0.8}};
        CHECK(topk_curve(probs, {0, 1}, 2)[0] == 1.0);
    }

    SUBCASE("hand enumeration with ties") {
        // Sample 0: order 2,0,1 -> label 0 enters at k=2.
        // Sample 1: tie between 0 and 1 resolves to 0 first -> label 1 enters at k=2.
        // Sample 2: order 1,2,0 -> label 0 enters at k=3.
        const std::vector<std::vector<double>> probs = {
            {0.3, 0.2, 0.5}, {0.4, 0.4, 0.2}, {0.1, 0.6, 0.3}};
        const std::vector<int> labels = {0, 1, 0};
        const auto curve = topk_curve(probs, labels, 3);
        CHECK(curve[0] == doctest::Approx(0.0));
        CHECK(curve[1] == doctest::Approx(2.0 / 3.0));
        CHECK(curve[2] == doctest::Approx(1.0));
    }

    SUBCASE("k_max outside range rejected") {
        const std::vector<std::vector<double>> probs = {{0.5, 0.5}};
        CHECK_THROWS_AS(topk_curve(probs, {0}, 3), std::invalid_argument);
        CHECK_THROWS_AS(topk_curve(probs, {0}, 0), std::invalid_argument);
    }
}

TEST_CASE("adjacency_error_fraction") {
    SUBCASE("all errors adjacent") {
        ConfusionMatrix m(11);
        for (int c = 0; c < 11; ++c) m.at(c, c) = 10;
        m.at(3, 4) = 2;
        m.at(7, 6) = 1;
        CHECK(adjacency_error_fraction(m) == 1.0);
    }

    SUBCASE("no errors returns 1 by convention") {
        ConfusionMatrix m(11);
        for (int c = 0; c < 11; ++c) m.at(c, c) = 4;
        CHECK(adjacency_error_fraction(m) == 1.0);
    }

    SUBCASE("three adjacent and one distant error") {
        ConfusionMatrix m(11);
        m.at(2, 3) = 2;
        m.at(5, 4) = 1;
        m.at(1, 9) = 1;
        CHECK(adjacency_error_fraction(m) == doctest::Approx(0.75));
    }
}

TEST_SUITE_END();
