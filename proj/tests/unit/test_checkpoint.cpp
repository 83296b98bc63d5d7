#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "daa/checkpoint.hpp"
#include "daa/errors.hpp"
#include "daa/image_io.hpp"
#include "daa/tensor_bridge.hpp"
#include "daa/training.hpp"
#include "test_util.hpp"
#include "tiny_models.hpp"

using namespace daa;
using namespace daa::testing;

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.meta["kind"] = "unit";
    c.meta["note"] = "two words";
    c.blocks.push_back({"a", torch::arange(6, torch::kFloat32).reshape({2, 3})});
    c.blocks.push_back({"b.scalar", torch::tensor(3.5f).reshape({})});
    c.blocks.push_back({"c", torch::zeros({0, 4})});
    return c;
}

std::string as_text(const std::vector<std::uint8_t>& b) { return std::string(b.begin(), b.end()); }
std::vector<std::uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

} // namespace

TEST_CASE("checkpoint encoding layout") {
    const auto bytes = encode_checkpoint(sample_checkpoint());
    const std::string head = "DAAW1\nmeta kind unit\nmeta note two words\nblocks 3\na 2 2 3\nb.scalar 0\nc 2 0 4\nend\n";
    REQUIRE(bytes.size() == head.size() + 7 * 4);
    CHECK(as_text(bytes).substr(0, head.size()) == head);
    // Payload is little-endian float32 in header order.
    float v[7];
    std::memcpy(v, bytes.data() + head.size(), sizeof v);
    for (int i = 0; i < 6; ++i) CHECK(v[i] == static_cast<float>(i));
    CHECK(v[6] == 3.5f);
}

TEST_CASE("checkpoint round trip") {
    const auto c = sample_checkpoint();
    const auto d = decode_checkpoint(encode_checkpoint(c));
    CHECK(d.meta == c.meta);
    REQUIRE(d.blocks.size() == c.blocks.size());
    for (std::size_t i = 0; i < c.blocks.size(); ++i) {
        CHECK(d.blocks[i].name == c.blocks[i].name);
        CHECK(d.blocks[i].value.sizes() == c.blocks[i].value.sizes());
        CHECK(torch::equal(d.blocks[i].value, c.blocks[i].value));
    }
    CHECK(d.has("a"));
    CHECK_FALSE(d.has("zz"));
    CHECK_THROWS_AS(d.at("zz"), FormatError);
    CHECK(encode_checkpoint(d) == encode_checkpoint(c));

    SUBCASE("random tensors survive bit-exactly") {
        std::mt19937_64 eng(7);
        for (int trial = 0; trial < 20; ++trial) {
            Checkpoint r;
            const int n = static_cast<int>(eng() % 4) + 1;
            for (int b = 0; b < n; ++b) {
                std::vector<std::int64_t> shape;
                const int nd = static_cast<int>(eng() % 4);
                for (int k = 0; k < nd; ++k) shape.push_back(static_cast<std::int64_t>(eng() % 5));
                auto gen = make_generator(eng());
                r.blocks.push_back({"t" + std::to_string(b), torch::randn(shape, gen)});
            }
            const auto back = decode_checkpoint(encode_checkpoint(r));
            for (std::size_t b = 0; b < r.blocks.size(); ++b) CHECK(torch::equal(back.blocks[b].value, r.blocks[b].value));
        }
    }
    SUBCASE("non-contiguous and double inputs are stored as float32") {
        Checkpoint r;
        r.blocks.push_back({"t", torch::arange(6, torch::kFloat64).reshape({2, 3}).t()});
        const auto back = decode_checkpoint(encode_checkpoint(r));
        CHECK(back.blocks[0].value.dtype() == torch::kFloat32);
        CHECK(torch::equal(back.blocks[0].value, r.blocks[0].value.to(torch::kFloat32)));
    }
}

TEST_CASE("checkpoint rejects malformed input") {
    const auto good = as_text(encode_checkpoint(sample_checkpoint()));
    CHECK_THROWS_AS(decode_checkpoint({}), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(as_bytes("DAAW2\nblocks 0\nend\n")), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(as_bytes("DAAW1\nblocks x\nend\n")), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(as_bytes("DAAW1\nblocks 1\na 1\nend\n")), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(as_bytes("DAAW1\nblocks 0\nbogus\n")), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(as_bytes("DAAW1\nblocks 0")), FormatError);
    CHECK_NOTHROW(decode_checkpoint(as_bytes("DAAW1\nblocks 0\nend\n")));
    SUBCASE("truncated payload reports the file end") {
        const auto cut = as_bytes(good.substr(0, good.size() - 1));
        try {
            decode_checkpoint(cut);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == cut.size());
        }
    }
    SUBCASE("trailing bytes") { CHECK_THROWS_AS(decode_checkpoint(as_bytes(good + "x")), FormatError); }
    SUBCASE("every strict prefix is rejected") {
        for (std::size_t n = 0; n < good.size(); ++n) CHECK_THROWS_AS(decode_checkpoint(as_bytes(good.substr(0, n))), FormatError);
    }
    SUBCASE("invalid metadata cannot be written") {
        Checkpoint c;
        c.meta["two words"] = "x";
        CHECK_THROWS_AS(encode_checkpoint(c), InvalidArgument);
        Checkpoint d;
        d.meta["k"] = "line\nbreak";
        CHECK_THROWS_AS(encode_checkpoint(d), InvalidArgument);
        Checkpoint e;
        e.blocks.push_back({"bad name", torch::zeros({1})});
        CHECK_THROWS_AS(encode_checkpoint(e), InvalidArgument);
    }
}

TEST_CASE("module append and restore") {
    auto a = ModelBundle::create(tiny_options(4, 16), 1);
    auto b = ModelBundle::create(tiny_options(4, 16), 2);
    Checkpoint c;
    append_module(c, *a.g, "G.");
    restore_module(c, *b.g, "G.");
    const auto pa = a.g->parameters(), pb = b.g->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));

    SUBCASE("missing block") {
        Checkpoint partial = c;
        partial.blocks.pop_back();
        CHECK_THROWS_AS(restore_module(partial, *b.g, "G."), FormatError);
    }
    SUBCASE("shape mismatch") {
        auto other = ModelBundle::create(tiny_options(5, 16), 3);
        CHECK_THROWS_AS(restore_module(c, *other.g, "G."), FormatError);
    }
    SUBCASE("wrong prefix") { CHECK_THROWS_AS(restore_module(c, *b.g, "X."), FormatError); }
}

TEST_CASE("checkpoint files") {
    const auto dir = std::filesystem::temp_directory_path() / "daa_test_checkpoint";
    std::filesystem::create_directories(dir);
    const auto c = sample_checkpoint();
    save_checkpoint(c, dir / "c.daaw");
    CHECK(encode_checkpoint(load_checkpoint(dir / "c.daaw")) == encode_checkpoint(c));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.daaw"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("base64") {
    CHECK(base64_encode(std::vector<std::uint8_t>{}) == "");
    const std::string text = "foobar";
    const std::vector<std::uint8_t> raw(text.begin(), text.end());
    // Standard test vectors.
    const char* expected[] = {"", "Zg==", "Zm8=", "Zm9v", "Zm9vYg==", "Zm9vYmE=", "Zm9vYmFy"};
    for (std::size_t n = 0; n <= raw.size(); ++n) {
        const std::vector<std::uint8_t> prefix(raw.begin(), raw.begin() + static_cast<long>(n));
        CHECK(base64_encode(prefix) == expected[n]);
        CHECK(base64_decode(expected[n]) == prefix);
    }
    SUBCASE("random round trip") {
        std::mt19937_64 eng(11);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::uint8_t> b(eng() % 64);
            for (auto& x : b) x = static_cast<std::uint8_t>(eng());
            CHECK(base64_decode(base64_encode(b)) == b);
        }
    }
    SUBCASE("malformed") {
        CHECK_THROWS_AS(base64_decode("Zg="), InvalidArgument);
        CHECK_THROWS_AS(base64_decode("Z!=="), InvalidArgument);
        CHECK_THROWS_AS(base64_decode("Zg==Zg=="), InvalidArgument);
        CHECK_THROWS_AS(base64_decode("=Zg="), InvalidArgument);
        // Non-zero bits below the padding have no canonical encoding.
        CHECK_THROWS_AS(base64_decode("Zh=="), InvalidArgument);
        CHECK_THROWS_AS(base64_decode("Zm9="), InvalidArgument);
    }
}

TEST_CASE("png encoding") {
    const std::vector<std::uint8_t> px{0, 64, 128, 255, 1, 2};
    const auto png = encode_png_gray(px, 3, 2);
    const std::uint8_t sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    REQUIRE(png.size() > 8);
    CHECK(std::memcmp(png.data(), sig, 8) == 0);
    CHECK(encode_png_gray(px, 3, 2) == png);
    CHECK(to_gray8(std::vector<float>{-1.f, 0.f, 1.f, 2.f, -5.f}, -1.f, 1.f) ==
          std::vector<std::uint8_t>{0, 128, 255, 255, 0});
}

TEST_CASE("tensor bridge") {
    std::mt19937_64 eng(3);
    const auto a = random_tensor(eng, 4, 2, 10, 12, 0.3);
    const auto t = anatomy_to_tensor(a);
    CHECK(t.sizes() == torch::IntArrayRef{4, 10, 12});
    for (int k = 0; k < 4; ++k) CHECK(tensor_to_map(t[k]) == a.channel(k));
    SUBCASE("harden inverts a one-hot tensor") {
        const auto labels = torch::randint(0, 4, {10, 12}, make_generator(5), torch::TensorOptions().dtype(torch::kLong));
        const auto onehot = torch::one_hot(labels, 4).permute({2, 0, 1}).to(torch::kFloat32);
        const auto h = harden(RefinedAnatomy{onehot, a.roles(), "x"}, PathologyLabel{});
        CHECK(torch::equal(anatomy_to_tensor(h), onehot));
        CHECK(h.roles() == a.roles());
    }
    SUBCASE("masks to labels") {
        BinaryMap m1(2, 2), m2(2, 2);
        m1.set(0, 0, true);
        m2.set(1, 1, true);
        CHECK(torch::equal(masks_to_labels({m1, m2}), torch::tensor({1, 0, 0, 2}, torch::kLong).reshape({2, 2})));
    }
    SUBCASE("image round trip") {
        std::vector<float> img(120);
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i) / 60.f - 1.f;
        CHECK(tensor_to_vector(image_to_tensor(img, 10, 12)) == img);
        CHECK_THROWS(image_to_tensor(img, 10, 11));
    }
}
