#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "daa/phantom_data.hpp"
#include "test_util.hpp"

using namespace daa;
using namespace daa::testing;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec(int count, std::uint64_t seed = 7) {
    auto spec = PhantomSpec::defaults();
    spec.count = count;
    spec.seed = seed;
    return spec;
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("daa_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("generate_phantoms") {
    SUBCASE("n = 0") { CHECK(generate_phantoms(small_spec(0)).empty()); }
    SUBCASE("same seed gives identical records") {
        CHECK(generate_phantoms(small_spec(12, 3)) == generate_phantoms(small_spec(12, 3)));
        CHECK_FALSE(generate_phantoms(small_spec(4, 3)) == generate_phantoms(small_spec(4, 4)));
    }
    SUBCASE("records are internally consistent and nested") {
        const auto recs = generate_phantoms(small_spec(40, 11));
        REQUIRE(recs.size() == 40);
        for (const auto& r : recs) {
            CHECK(r.rows == 64);
            CHECK(r.anatomy.num_channels() == 12);
            CHECK(r.imaging.code.size() == static_cast<std::size_t>(kImagingDim));
            const auto& lv = r.masks[kLV];
            const auto& myo = r.masks[kMYO];
            const auto& rv = r.masks[kRV];
            CHECK_FALSE((lv & myo).any());
            CHECK_FALSE((lv & rv).any());
            CHECK_FALSE((myo & rv).any());
            // LV sits inside the region enclosed by the myocardium: every LV pixel is
            // surrounded by LV/MYO along all four axis rays before reaching background.
            const auto heart = lv | myo;
            for (int y = 0; y < r.rows; ++y)
                for (int x = 0; x < r.cols; ++x) {
                    if (!lv.at(y, x)) continue;
                    for (auto [dy, dx] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                        int yy = y, xx = x;
                        bool hit_myo = false;
                        while (heart.in_bounds(yy, xx) && heart.at(yy, xx)) {
                            hit_myo = hit_myo || myo.at(yy, xx);
                            yy += dy;
                            xx += dx;
                        }
                        CHECK(hit_myo);
                    }
                }
            for (int k = 0; k < kNumHeartStructures; ++k) CHECK(r.anatomy.channel(k) == r.masks[static_cast<std::size_t>(k)]);
            for (float v : r.image) {
                CHECK(v >= -1.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
    SUBCASE("class morphology is separable in mask statistics") {
        const auto recs = generate_phantoms(small_spec(80, 5));
        std::map<std::string, std::vector<double>> lv, myo, rv;
        for (const auto& r : recs) {
            lv[r.label.class_name].push_back(static_cast<double>(r.masks[kLV].count()));
            myo[r.label.class_name].push_back(static_cast<double>(r.masks[kMYO].count()) / static_cast<double>((r.masks[kMYO] | r.masks[kLV]).count()));
            rv[r.label.class_name].push_back(static_cast<double>(r.masks[kRV].count()));
        }
        auto max_of = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
        auto min_of = [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };
        CHECK(max_of(lv["HCM"]) < min_of(lv["NOR"]));  // small LV
        CHECK(min_of(myo["HCM"]) > max_of(myo["NOR"])); // thick wall
        CHECK(min_of(lv["DCM"]) > max_of(lv["NOR"]));  // dilated LV
        CHECK(min_of(rv["ARV"]) > max_of(rv["NOR"]));  // enlarged RV
    }
    SUBCASE("infeasible specs") {
        auto spec = small_spec(4);
        spec.classes[2].lv_radius = {24.0, 26.0};
        CHECK_THROWS_AS(generate_phantoms(spec), SpecInfeasible);
        spec = small_spec(4);
        spec.classes[0].myo_thickness = {3.0, 2.0};
        CHECK_THROWS_AS(generate_phantoms(spec), SpecInfeasible);
    }
    SUBCASE("weighted class mix") {
        auto spec = small_spec(20);
        spec.class_weights = {2, 1, 1, 0};
        std::map<int, int> counts;
        for (const auto& r : generate_phantoms(spec)) ++counts[r.label.class_index];
        CHECK(counts[0] == 10);
        CHECK(counts[1] == 5);
        CHECK(counts[2] == 5);
        CHECK(counts[3] == 0);
    }
}

TEST_CASE("masks_to_factors") {
    const int n = 16;
    SUBCASE("empty masks: heart channels zero, background covers the frame") {
        const auto t = masks_to_factors({BinaryMap(n, n), BinaryMap(n, n), BinaryMap(n, n)}, 5);
        for (int k = 0; k < 3; ++k) CHECK_FALSE(t.channel(k).any());
        CHECK(t.channel(3).count() == static_cast<std::size_t>(n * n));
        CHECK(t.heart_channels() == std::vector<int>{0, 1, 2});
    }
    SUBCASE("disjoint masks embed exactly") {
        const auto lv = rect(n, n, 6, 6, 8, 8), myo = rect(n, n, 4, 10, 9, 11), rv = rect(n, n, 1, 1, 3, 3);
        const auto t = masks_to_factors({lv, myo, rv}, 4);
        CHECK(t.channel(0) == lv);
        CHECK(t.channel(1) == myo);
        CHECK(t.channel(2) == rv);
        CHECK(heart_mask(t) == (lv | myo | rv));
    }
    SUBCASE("overlap and K errors") {
        CHECK_THROWS_AS(masks_to_factors({rect(n, n, 0, 0, 3, 3), rect(n, n, 3, 3, 5, 5)}, 4), OverlapError);
        CHECK_THROWS_AS(masks_to_factors({BinaryMap(n, n), BinaryMap(n, n)}, 2), InvalidArgument);
    }
    SUBCASE("phantoms: every pixel covered, channels partition the frame, heart mask = mask union") {
        for (const auto& r : generate_phantoms(small_spec(16, 2))) {
            const auto& t = r.anatomy;
            for (int y = 0; y < r.rows; ++y)
                for (int x = 0; x < r.cols; ++x) {
                    int hits = 0;
                    for (int k = 0; k < t.num_channels(); ++k) hits += t.channel(k).at(y, x);
                    CHECK(hits == 1);
                }
            CHECK(heart_mask(t) == (r.masks[0] | r.masks[1] | r.masks[2]));
        }
    }
}

TEST_CASE("DAAF1 persistence") {
    const auto dir = scratch_dir("daaf");
    auto recs = generate_phantoms(small_spec(3));
    recs[1].synthetic = true;
    recs[1].provenance = "base=ph0000;plan=swap:2:ph0003";

    SUBCASE("round trip is bit-exact") {
        for (const auto& r : recs) {
            save_subject(r, dir / (r.subject_id + ".daaf"));
            CHECK(load_subject(dir / (r.subject_id + ".daaf")) == r);
        }
    }
    SUBCASE("header layout") {
        const auto bytes = encode_subject(recs[0]);
        CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DAAF");
        CHECK(bytes[4] == 1);
        CHECK(bytes[5] == 0);
        CHECK(bytes[8] == 64); // H, little-endian u32
    }
    SUBCASE("truncated and corrupt files raise FormatError") {
        auto bytes = encode_subject(recs[0]);
        for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
            std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
            CHECK_THROWS_AS(decode_subject(part), FormatError);
        }
        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(decode_subject(bad), FormatError);
        auto extra = bytes;
        extra.push_back(0);
        CHECK_THROWS_AS(decode_subject(extra), FormatError);
        std::ofstream(dir / "trunc.daaf", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), 100);
        try {
            load_subject(dir / "trunc.daaf");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() <= 100);
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("build_manifest") {
    const auto recs = generate_phantoms(small_spec(100, 21));
    SUBCASE("70/15/15 on 100 subjects, disjoint, stratified") {
        const auto m = build_manifest(recs, 1);
        CHECK(m.train.size() == 70);
        CHECK(m.val.size() == 15);
        CHECK(m.test.size() == 15);
        std::set<std::string> seen;
        for (const auto* split : {&m.train, &m.val, &m.test})
            for (const auto& e : *split) CHECK(seen.insert(e.subject_id).second);
        for (const auto& [cls, count] : m.class_counts(m.train)) CHECK(std::abs(count - 17.5) <= 1.0);
    }
    SUBCASE("same seed, same split; different seed, different split") {
        CHECK(build_manifest(recs, 5) == build_manifest(recs, 5));
        CHECK_FALSE(build_manifest(recs, 5) == build_manifest(recs, 6));
    }
    SUBCASE("ARV imbalance to 5% of the train split") {
        const auto full = build_manifest(recs, 2);
        const auto m = build_manifest(recs, 2, Imbalance{Imbalance::Kind::pathology_class, 3, 0.05});
        const int arv = m.class_counts(m.train)["ARV"];
        CHECK(arv == static_cast<int>(std::lround(0.05 * static_cast<double>(m.train.size()))));
        CHECK(arv >= 1);
        CHECK(m.val == full.val);
        CHECK(m.test == full.test);
    }
    SUBCASE("vendor imbalance to 14%") {
        const auto m = build_manifest(recs, 2, Imbalance{Imbalance::Kind::vendor, 3, 0.14});
        const double share = static_cast<double>(m.vendor_counts(m.train)[3]) / static_cast<double>(m.train.size());
        CHECK(share == doctest::Approx(0.14).epsilon(0.25));
    }
    SUBCASE("too few subjects") {
        CHECK_THROWS_AS(build_manifest({recs[0], recs[1]}, 0), InsufficientSubjects);
    }
    SUBCASE("json round trip") {
        const auto m = build_manifest(recs, 9);
        CHECK(manifest_from_json(manifest_to_json(m)) == m);
    }
}

TEST_CASE("100-record dataset: manifest counts match on-disk files") {
    const auto dir = scratch_dir("dataset");
    const auto recs = generate_phantoms(small_spec(100, 4));
    const auto m = build_manifest(recs, 3);
    save_dataset(dir, recs, m);
    std::size_t files = 0;
    std::set<std::string> on_disk;
    for (const auto& e : fs::directory_iterator(dir / "subjects")) {
        ++files;
        on_disk.insert(e.path().stem().string());
    }
    const auto loaded = load_manifest(dir / "manifest.json");
    CHECK(files == loaded.size());
    for (const auto* split : {&loaded.train, &loaded.val, &loaded.test})
        for (const auto& e : *split) CHECK(on_disk.count(e.subject_id) == 1);
    CHECK(load_records(dir) == recs);
    fs::remove_all(dir);
}

TEST_CASE("PNG export is a valid PNG stream") {
    const auto r = generate_phantoms(small_spec(1)).front();
    const auto png = image_png(r.image, r.rows, r.cols);
    REQUIRE(png.size() > 33);
    CHECK(png[0] == 0x89);
    CHECK(std::string(png.begin() + 12, png.begin() + 16) == "IHDR");
    CHECK(png == image_png(r.image, r.rows, r.cols));
}
