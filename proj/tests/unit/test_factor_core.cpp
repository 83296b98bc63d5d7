#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "daa/factor_core.hpp"
#include "test_util.hpp"

using namespace daa;
using namespace daa::testing;

namespace {

// Oracles: exhaustive pixel scans, independent of the separable / bitwise paths.
PixelCoord brute_com(const BinaryMap& m) {
    double sr = 0, sc = 0, n = 0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m.at(r, c) == 1) {
                sr += r;
                sc += c;
                n += 1;
            }
    return {sr / n, sc / n};
}

BinaryMap brute_morph(const BinaryMap& m, int radius, bool erode_op) {
    BinaryMap out(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            bool all = true, any = false;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    const bool v = m.in_bounds(r + dr, c + dc) && m.at(r + dr, c + dc);
                    all = all && v;
                    any = any || v;
                }
            out.set(r, c, erode_op ? all : any);
        }
    return out;
}

AnatomyTensor healthy_and_store(SubjectStore& store) {
    // 4 channels on 32x32: LV, MYO, RV heart-related + one background.
    const int n = 32;
    auto lv = disk(n, n, 15, 17, 4);
    auto myo_outer = disk(n, n, 15, 17, 6.5);
    BinaryMap myo(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) myo.set(r, c, myo_outer.at(r, c) && !lv.at(r, c));
    auto rv = rect(n, n, 12, 4, 19, 8);
    BinaryMap bg(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) bg.set(r, c, !(lv.at(r, c) || myo.at(r, c) || rv.at(r, c)));
    auto a = make_tensor({lv, myo, rv, bg}, 3, "A", {0, "NOR"});

    auto lv_b = disk(n, n, 13, 14, 2.5);
    auto myo_b_outer = disk(n, n, 13, 14, 7.5);
    BinaryMap myo_b(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) myo_b.set(r, c, myo_b_outer.at(r, c) && !lv_b.at(r, c));
    auto b = make_tensor({lv_b, myo_b, rect(n, n, 10, 1, 16, 4), BinaryMap(n, n)}, 3, "B", {1, "HCM"});
    auto c = make_tensor({lv, myo, rv, bg}, 3, "C", {2, "DCM"});
    auto d = make_tensor({lv_b, myo_b, rv, bg}, 3, "D", {1, "HCM"});
    store.emplace("A", a);
    store.emplace("B", b);
    store.emplace("C", c);
    store.emplace("D", d);
    return a;
}

} // namespace

TEST_CASE("BinaryMap rejects non-binary values") {
    CHECK_THROWS_AS(BinaryMap(2, 2, {0, 1, 2, 0}), InvalidArgument);
    CHECK_NOTHROW(BinaryMap(2, 2, {0, 1, 1, 0}));
}

TEST_CASE("AnatomyTensor invariants") {
    CHECK_THROWS_AS(make_tensor({BinaryMap(4, 4)}, 1), InvalidArgument); // below 8x8
    CHECK_THROWS_AS(make_tensor({BinaryMap(8, 8)}, 0), InvalidArgument); // no heart channel
    CHECK_THROWS_AS(make_tensor({BinaryMap(8, 8), BinaryMap(8, 9)}, 1), ShapeMismatch);
    CHECK_THROWS_AS(AnatomyTensor({}, {}, "x", {}), InvalidArgument);
}

TEST_CASE("center_of_mass") {
    SUBCASE("single pixel") {
        BinaryMap m(4, 4);
        m.set(1, 2, true);
        const auto com = center_of_mass(m);
        CHECK(com.row == 1.0);
        CHECK(com.col == 2.0);
    }
    SUBCASE("centred 2x2 block") {
        const auto com = center_of_mass(rect(4, 4, 1, 1, 2, 2));
        CHECK(com.row == 1.5);
        CHECK(com.col == 1.5);
    }
    SUBCASE("five-pixel pattern against brute force") {
        BinaryMap m(8, 8);
        for (auto [r, c] : {std::pair{0, 7}, {3, 1}, {5, 5}, {6, 2}, {7, 7}}) m.set(r, c, true);
        const auto com = center_of_mass(m);
        const auto ref = brute_com(m);
        CHECK(com.row == doctest::Approx(ref.row).epsilon(1e-15));
        CHECK(com.col == doctest::Approx(ref.col).epsilon(1e-15));
        CHECK(ref.row == doctest::Approx(21.0 / 5.0));
        CHECK(ref.col == doctest::Approx(22.0 / 5.0));
    }
    SUBCASE("empty factor") { CHECK_THROWS_AS(center_of_mass(BinaryMap(4, 4)), EmptyFactor); }
}

TEST_CASE("register_factor") {
    SUBCASE("donor equals target") {
        const auto m = disk(16, 16, 7, 8, 3);
        CHECK(register_factor(m, m) == m);
    }
    SUBCASE("pure translation of a single pixel") {
        BinaryMap donor(8, 8);
        donor.set(0, 0, true);
        const auto target = rect(8, 8, 2, 2, 4, 4); // COM (3,3)
        BinaryMap expected(8, 8);
        expected.set(3, 3, true);
        CHECK(register_factor(donor, target) == expected);
    }
    SUBCASE("empty inputs") {
        CHECK_THROWS_AS(register_factor(BinaryMap(8, 8), rect(8, 8, 1, 1, 2, 2)), EmptyFactor);
        CHECK_THROWS_AS(register_factor(rect(8, 8, 1, 1, 2, 2), BinaryMap(8, 8)), EmptyFactor);
    }
    SUBCASE("property: registered COM lands within half a pixel of the target COM") {
        std::mt19937_64 eng(11);
        for (int trial = 0; trial < 200; ++trial) {
            std::uniform_real_distribution<double> pos(10, 22), rad(1.0, 4.5);
            const auto donor = disk(32, 32, pos(eng), pos(eng), rad(eng));
            const auto target = disk(32, 32, pos(eng), pos(eng), rad(eng));
            const auto moved = register_factor(donor, target);
            REQUIRE(moved.count() == donor.count()); // nothing cropped at these positions
            const auto a = brute_com(moved), b = brute_com(target);
            CHECK(std::abs(a.row - b.row) <= 0.5);
            CHECK(std::abs(a.col - b.col) <= 0.5);
        }
    }
    SUBCASE("pixels leaving the frame are dropped, no wraparound") {
        BinaryMap donor(8, 8);
        donor.set(0, 0, true);
        donor.set(0, 7, true); // COM (0, 3.5)
        BinaryMap target(8, 8);
        target.set(0, 6, true);
        const auto moved = register_factor(donor, target); // shift by lround(2.5) = 3 cols
        CHECK(moved.count() == 1);
        CHECK(moved.at(0, 3) == 1);
    }
}

TEST_CASE("apply_plan") {
    SubjectStore store;
    const auto a = healthy_and_store(store);

    SUBCASE("empty plan is the identity") {
        auto [out, rec] = apply_plan(a, store, {"A", {}});
        CHECK(out == a);
        CHECK_FALSE(rec.modified_support.any());
    }
    SUBCASE("self swap is the identity") {
        for (int k = 0; k < 4; ++k) {
            auto [out, rec] = apply_plan(a, store, {"A", {{OpKind::swap, k, "A"}}});
            CHECK(out == a);
        }
    }
    SUBCASE("remove MYO+LV of healthy A, add registered MYO+LV of HCM B") {
        ArithmeticPlan plan{"A",
                            {{OpKind::remove, 0, std::nullopt},
                             {OpKind::remove, 1, std::nullopt},
                             {OpKind::add, 0, "B"},
                             {OpKind::add, 1, "B"}}};
        REQUIRE(validate_plan(plan, store).empty());
        auto [out, rec] = apply_plan(a, store, plan);
        const auto& b = store.at("B");
        CHECK(out.channel(0) == register_factor(b.channel(0), a.channel(0)));
        CHECK(out.channel(1) == register_factor(b.channel(1), a.channel(1)));
        CHECK(out.channel(2) == a.channel(2));
        CHECK(out.channel(3) == a.channel(3));
        CHECK(rec.ops_applied.size() == 4);
    }
    SUBCASE("add ORs into an occupied channel") {
        auto [out, rec] = apply_plan(a, store, {"A", {{OpKind::add, 2, "B"}}});
        const auto moved = register_factor(store.at("B").channel(2), a.channel(2));
        CHECK(out.channel(2) == (a.channel(2) | moved));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(apply_plan(a, store, {"A", {{OpKind::swap, 1, "Z"}}}), UnknownSubject);
        CHECK_THROWS_AS(apply_plan(a, store, {"A", {{OpKind::swap, 9, "B"}}}), InvalidPlan);
        CHECK_THROWS_AS(apply_plan(a, store, {"A", {{OpKind::remove, 1, "B"}}}), InvalidPlan);
        CHECK_THROWS_AS(apply_plan(a, store, {"A", {{OpKind::swap, 3, "B"}}}), EmptyFactor); // B's bg is empty
    }
    SUBCASE("property: untouched channels bit-identical, modified support covers every change, swap COM") {
        std::mt19937_64 eng(5);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 24;
            SubjectStore s;
            auto base = random_tensor(eng, 4, 3, n, n, 0.15, "base");
            auto donor = random_tensor(eng, 4, 3, n, n, 0.15, "donor");
            // make sure no channel is empty
            for (int k = 0; k < 4; ++k) {
                auto m = base.channel(k);
                m.set(12, 12, true);
                base.set_channel(k, m);
                auto d = donor.channel(k);
                d.set(5, 5, true);
                donor.set_channel(k, d);
            }
            s.emplace("base", base);
            s.emplace("donor", donor);
            std::uniform_int_distribution<int> ch(0, 3), kind(0, 2), len(0, 3);
            ArithmeticPlan plan{"base", {}};
            std::vector<bool> named(4, false);
            for (int i = len(eng); i > 0; --i) {
                const auto k = static_cast<OpKind>(kind(eng));
                const int c = ch(eng);
                named[static_cast<std::size_t>(c)] = true;
                plan.ops.push_back({k, c, k == OpKind::remove ? std::nullopt : std::optional<std::string>("donor")});
            }
            auto [out, rec] = apply_plan(base, s, plan);
            for (int k = 0; k < 4; ++k) {
                if (!named[static_cast<std::size_t>(k)]) CHECK(out.channel(k) == base.channel(k));
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < n; ++c)
                        if (out.channel(k).at(r, c) != base.channel(k).at(r, c)) CHECK(rec.modified_support.at(r, c) == 1);
            }
        }
    }
    SUBCASE("swap COM property on in-frame blobs") {
        std::mt19937_64 eng(21);
        std::uniform_real_distribution<double> pos(9, 15), rad(1.5, 3.5);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 24;
            auto base = make_tensor({disk(n, n, pos(eng), pos(eng), rad(eng)), BinaryMap(n, n)}, 1, "x");
            auto donor = make_tensor({disk(n, n, pos(eng), pos(eng), rad(eng)), BinaryMap(n, n)}, 1, "y");
            SubjectStore s{{"x", base}, {"y", donor}};
            auto [out, rec] = apply_plan(base, s, {"x", {{OpKind::swap, 0, "y"}}});
            const auto a = brute_com(out.channel(0)), b = brute_com(base.channel(0));
            CHECK(std::abs(a.row - b.row) <= 0.5);
            CHECK(std::abs(a.col - b.col) <= 0.5);
        }
    }
}

TEST_CASE("heart_mask") {
    const int n = 16;
    SUBCASE("all heart channels zero") {
        auto c = make_tensor({BinaryMap(n, n), BinaryMap(n, n), rect(n, n, 0, 0, 15, 15)}, 2);
        CHECK_FALSE(heart_mask(c).any());
    }
    SUBCASE("one full heart channel") {
        auto c = make_tensor({rect(n, n, 0, 0, 15, 15), BinaryMap(n, n), BinaryMap(n, n)}, 2);
        CHECK(heart_mask(c).count() == static_cast<std::size_t>(n * n));
    }
    SUBCASE("property: exhaustive per-pixel OR oracle on inputs up to 32x32") {
        std::mt19937_64 eng(3);
        for (int trial = 0; trial < 60; ++trial) {
            std::uniform_int_distribution<int> side(8, 32), kk(1, 6);
            const int rows = side(eng), cols = side(eng), k = kk(eng);
            std::uniform_int_distribution<int> hh(1, k);
            const int heart = hh(eng);
            auto c = random_tensor(eng, k, heart, rows, cols, 0.2);
            const auto m = heart_mask(c);
            for (int r = 0; r < rows; ++r)
                for (int col = 0; col < cols; ++col) {
                    bool any = false;
                    for (int ch = 0; ch < heart; ++ch) any = any || c.channel(ch).at(r, col) == 1;
                    CHECK((m.at(r, col) == 1) == any);
                }
        }
    }
}

TEST_CASE("overlap_report") {
    const int n = 16;
    SUBCASE("disjoint channels") {
        auto c = make_tensor({rect(n, n, 0, 0, 3, 3), rect(n, n, 5, 5, 8, 8), rect(n, n, 10, 10, 12, 12)}, 3);
        CHECK(overlap_report(c).empty());
    }
    SUBCASE("identical channels") {
        const auto m = rect(n, n, 2, 2, 5, 6); // 20 pixels
        auto c = make_tensor({m, m, BinaryMap(n, n)}, 2);
        const auto rep = overlap_report(c);
        REQUIRE(rep.size() == 1);
        CHECK(rep[0] == ChannelOverlap{0, 1, 20});
    }
    SUBCASE("random pairs against brute-force AND sums") {
        std::mt19937_64 eng(8);
        for (int trial = 0; trial < 40; ++trial) {
            auto c = random_tensor(eng, 5, 4, 20, 24, 0.3);
            const auto rep = overlap_report(c);
            std::vector<ChannelOverlap> expected;
            for (int i = 0; i < 4; ++i)
                for (int j = i + 1; j < 4; ++j) {
                    std::size_t cnt = 0;
                    for (int r = 0; r < 20; ++r)
                        for (int col = 0; col < 24; ++col)
                            cnt += c.channel(i).at(r, col) && c.channel(j).at(r, col);
                    if (cnt) expected.push_back({i, j, cnt});
                }
            CHECK(rep == expected);
        }
    }
}

TEST_CASE("morph_traverse") {
    const int n = 16;
    SUBCASE("dilate all-zero channel") {
        auto c = make_tensor({BinaryMap(n, n), rect(n, n, 0, 0, 15, 15)}, 1);
        CHECK_FALSE(morph_traverse(c, 0, MorphOp::dilate, 2).channel(0).any());
    }
    SUBCASE("dilate a single pixel with step 1") {
        BinaryMap m(n, n);
        m.set(7, 9, true);
        auto c = make_tensor({m, BinaryMap(n, n)}, 1);
        CHECK(morph_traverse(c, 0, MorphOp::dilate, 1).channel(0) == rect(n, n, 6, 8, 8, 10));
    }
    SUBCASE("erode then dilate a convex blob stays inside the original") {
        const auto blob = disk(n, n, 8, 8, 5);
        auto c = make_tensor({blob, BinaryMap(n, n)}, 1);
        const auto opened = morph_traverse(morph_traverse(c, 0, MorphOp::erode, 1), 0, MorphOp::dilate, 1);
        CHECK(opened.channel(0).subset_of(blob));
        CHECK(opened.channel(0) == brute_morph(brute_morph(blob, 1, true), 1, false));
    }
    SUBCASE("erosion emptying the factor is reported") {
        auto c = make_tensor({rect(n, n, 4, 4, 6, 6), BinaryMap(n, n)}, 1);
        CHECK_THROWS_AS(morph_traverse(c, 0, MorphOp::erode, 2), EmptyFactor);
        CHECK_THROWS_AS(morph_traverse(c, 0, MorphOp::erode, 0), InvalidArgument);
    }
    SUBCASE("property: separable filter equals exhaustive neighbourhood scan; monotone; other channels intact") {
        std::mt19937_64 eng(17);
        for (int trial = 0; trial < 40; ++trial) {
            auto c = random_tensor(eng, 3, 2, 20, 20, 0.55);
            std::uniform_int_distribution<int> step(1, 3);
            const int s = step(eng);
            const auto d = morph_traverse(c, 1, MorphOp::dilate, s);
            CHECK(d.channel(1) == brute_morph(c.channel(1), s, false));
            CHECK(c.channel(1).subset_of(d.channel(1)));
            CHECK(d.channel(0) == c.channel(0));
            CHECK(d.channel(2) == c.channel(2));
            const auto expected_erosion = brute_morph(c.channel(1), s, true);
            if (expected_erosion.any()) {
                const auto e = morph_traverse(c, 1, MorphOp::erode, s);
                CHECK(e.channel(1) == expected_erosion);
                CHECK(e.channel(1).subset_of(c.channel(1)));
            } else {
                CHECK_THROWS_AS(morph_traverse(c, 1, MorphOp::erode, s), EmptyFactor);
            }
        }
    }
}

TEST_CASE("validate_plan") {
    SubjectStore store;
    healthy_and_store(store);
    SUBCASE("HCM factor into healthy base") {
        CHECK(validate_plan({"A", {{OpKind::swap, 1, "B"}}}, store).empty());
        CHECK(plan_target_pathology({"A", {{OpKind::swap, 1, "B"}}}, store).class_name == "HCM");
    }
    SUBCASE("HCM factor into DCM base") {
        const auto v = validate_plan({"C", {{OpKind::swap, 1, "B"}}}, store);
        REQUIRE(v.size() == 1);
        CHECK(v[0].code == "multiple_pathologies");
    }
    SUBCASE("same pathology swap") { CHECK(validate_plan({"B", {{OpKind::swap, 1, "D"}}}, store).empty()); }
    SUBCASE("empty plan") { CHECK(validate_plan({"A", {}}, store).empty()); }
    SUBCASE("structural violations") {
        CHECK(validate_plan({"A", {{OpKind::swap, 1, std::nullopt}}}, store)[0].code == "missing_donor");
        CHECK(validate_plan({"A", {{OpKind::remove, 1, "B"}}}, store)[0].code == "remove_with_donor");
        CHECK(validate_plan({"A", {{OpKind::swap, 7, "B"}}}, store)[0].code == "bad_channel");
        CHECK_THROWS_AS(validate_plan({"A", {{OpKind::swap, 1, "nobody"}}}, store), UnknownSubject);
        CHECK_THROWS_AS(validate_plan({"nobody", {}}, store), UnknownSubject);
    }
    SUBCASE("property: permuting ops never changes accept/reject") {
        std::mt19937_64 eng(4);
        const std::vector<std::string> ids{"A", "B", "C", "D"};
        std::uniform_int_distribution<int> pick(0, 3), ch(0, 3), len(0, 4), kind(0, 2);
        for (int trial = 0; trial < 300; ++trial) {
            ArithmeticPlan plan{ids[static_cast<std::size_t>(pick(eng))], {}};
            for (int i = len(eng); i > 0; --i) {
                const auto k = static_cast<OpKind>(kind(eng));
                plan.ops.push_back({k, ch(eng), k == OpKind::remove ? std::nullopt
                                                                    : std::optional<std::string>(ids[static_cast<std::size_t>(pick(eng))])});
            }
            const bool ok = validate_plan(plan, store).empty();
            for (int p = 0; p < 5; ++p) {
                auto shuffled = plan;
                std::shuffle(shuffled.ops.begin(), shuffled.ops.end(), eng);
                CHECK(validate_plan(shuffled, store).empty() == ok);
            }
        }
    }
}
