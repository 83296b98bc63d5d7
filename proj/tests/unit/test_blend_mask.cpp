#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "daa/blend_mask.hpp"
#include "test_util.hpp"

using namespace daa;
using namespace daa::testing;

TEST_CASE("build_blend_mask basics") {
    SUBCASE("all-zero support") {
        const auto b = build_blend_mask(BinaryMap(16, 16), 3, 1.5);
        for (float v : b.phi) CHECK(v == 0.0f);
    }
    SUBCASE("radius 0 and sigma 0 reproduce the support") {
        std::mt19937_64 eng(1);
        const auto m = random_map(eng, 12, 14, 0.3);
        const auto b = build_blend_mask(m, 0, 0.0);
        for (int r = 0; r < 12; ++r)
            for (int c = 0; c < 14; ++c) CHECK(b.at(r, c) == static_cast<float>(m.at(r, c)));
    }
    SUBCASE("takes a MixRecord") {
        MixRecord rec{rect(16, 16, 4, 4, 6, 6), {}};
        CHECK(build_blend_mask(rec, 1, 0.0).phi == build_blend_mask(rect(16, 16, 3, 3, 7, 7), 0, 0.0).phi);
    }
    SUBCASE("negative parameters") {
        CHECK_THROWS_AS(build_blend_mask(BinaryMap(8, 8), -1, 0.0), InvalidArgument);
        CHECK_THROWS_AS(build_blend_mask(BinaryMap(8, 8), 0, -1.0), InvalidArgument);
    }
}

TEST_CASE("single pixel, radius 2, sigma 1 against a directly evaluated 2-D Gaussian") {
    const int n = 17, cr = 8, cc = 8;
    BinaryMap m(n, n);
    m.set(cr, cc, true);
    const auto b = build_blend_mask(m, 2, 1.0);

    // Oracle: phi(j) = sum over the 5x5 dilated block of a 2-D kernel truncated at
    // radius ceil(3 sigma) = 3 and normalised over its (7x7) support.
    double z = 0.0;
    for (int dr = -3; dr <= 3; ++dr)
        for (int dc = -3; dc <= 3; ++dc) z += std::exp(-0.5 * (dr * dr + dc * dc));
    auto oracle = [&](int r, int c) {
        if (std::abs(r - cr) > 2 || std::abs(c - cc) > 2) return 0.0;
        double acc = 0.0;
        for (int br = cr - 2; br <= cr + 2; ++br)
            for (int bc = cc - 2; bc <= cc + 2; ++bc) {
                const int dr = r - br, dc = c - bc;
                if (std::abs(dr) <= 3 && std::abs(dc) <= 3) acc += std::exp(-0.5 * (dr * dr + dc * dc)) / z;
            }
        return acc;
    };
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) CHECK(b.at(r, c) == doctest::Approx(oracle(r, c)).epsilon(1e-6));

    // Peak at the centre, non-increasing with Chebyshev distance inside the block, zero outside.
    for (int r = cr - 2; r <= cr + 2; ++r)
        for (int c = cc - 2; c <= cc + 2; ++c) {
            CHECK(b.at(r, c) <= b.at(cr, cc));
            CHECK(b.at(r, c) > 0.0f);
            if (r != cr) CHECK(b.at(r, c) <= b.at(r + (r < cr ? 1 : -1), c));
            if (c != cc) CHECK(b.at(r, c) <= b.at(r, c + (c < cc ? 1 : -1)));
        }
    CHECK(b.at(cr - 3, cc) == 0.0f);
    CHECK(b.at(cr, cc + 3) == 0.0f);
}

TEST_CASE("property: values in [0,1], zero outside the dilated support") {
    std::mt19937_64 eng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const auto m = random_map(eng, 24, 24, 0.03);
        std::uniform_int_distribution<int> rad(0, 4);
        std::uniform_real_distribution<double> sig(0.0, 2.5);
        const int radius = rad(eng);
        const auto b = build_blend_mask(m, radius, sig(eng));
        const auto region = dilate(m, radius);
        for (int r = 0; r < 24; ++r)
            for (int c = 0; c < 24; ++c) {
                CHECK(b.at(r, c) >= 0.0f);
                CHECK(b.at(r, c) <= 1.0f);
                if (!region.at(r, c)) CHECK(b.at(r, c) == 0.0f);
            }
    }
}

TEST_CASE("property: translation equivariance away from the frame border") {
    std::mt19937_64 eng(9);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryMap m(40, 40);
        std::uniform_int_distribution<int> pos(14, 20);
        for (int i = 0; i < 6; ++i) m.set(pos(eng), pos(eng), true);
        std::uniform_int_distribution<int> shift(-4, 4);
        const int dr = shift(eng), dc = shift(eng);
        const auto a = build_blend_mask(m, 2, 1.3);
        const auto b = build_blend_mask(translate(m, dr, dc), 2, 1.3);
        for (int r = 0; r < 40; ++r)
            for (int c = 0; c < 40; ++c) {
                const int sr = r + dr, sc = c + dc;
                if (sr < 0 || sc < 0 || sr >= 40 || sc >= 40) continue;
                CHECK(b.at(sr, sc) == doctest::Approx(a.at(r, c)).epsilon(1e-6));
            }
    }
}

TEST_CASE("defaults scale with frame size") {
    CHECK(default_dilation_radius(64) == 5);
    CHECK(default_blur_sigma(64) == 2.0);
    CHECK(default_dilation_radius(128) == 10);
    CHECK(default_blur_sigma(32) == 1.0);
}
