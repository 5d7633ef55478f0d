#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "tadiff/errors.hpp"
#include "tadiff/rng.hpp"
#include "tadiff/tgv.hpp"

using namespace tadiff;
namespace fs = std::filesystem;

namespace {
fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / "tadiff_tgv_test";
    fs::create_directories(p);
    return p;
}
}  // namespace

TEST_CASE("f32 roundtrip is bitwise identity") {
    Rng rng(1);
    TensorT<float> t = normal_tensor<float>({3, 64, 64}, rng);
    const fs::path p = scratch() / "a.tgv";
    save_tgv(p, t);
    TensorT<float> back = load_tgv_f32(p);
    REQUIRE(back.shape() == t.shape());
    CHECK(std::memcmp(back.data(), t.data(), t.numel() * sizeof(float)) == 0);
}

TEST_CASE("u8 roundtrip and ranks 1 through 4") {
    Rng rng(2);
    const std::vector<std::vector<int>> shapes = {{7}, {3, 5}, {2, 3, 4}, {2, 3, 4, 5}};
    for (const auto& shape : shapes) {
        TensorT<uint8_t> m(shape);
        for (std::size_t i = 0; i < m.numel(); ++i)
            m[i] = static_cast<uint8_t>(rng.uniform_int(0, 255));
        const fs::path p = scratch() / "u8.tgv";
        save_tgv(p, m);
        TensorT<uint8_t> back = load_tgv_u8(p);
        REQUIRE(back.shape() == shape);
        CHECK(std::memcmp(back.data(), m.data(), m.numel()) == 0);

        TensorT<float> f(shape);
        rng.fill_normal(f.data(), f.numel());
        save_tgv(p, f);
        TensorT<float> fback = load_tgv_f32(p);
        CHECK(std::memcmp(fback.data(), f.data(), f.numel() * sizeof(float)) == 0);
    }
}

TEST_CASE("wrong magic reports byte offset 0") {
    const fs::path p = scratch() / "bad_magic.tgv";
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << "TGV2";
    const char rest[] = {1, 1, 4, 0, 0, 0, 0, 0, 0, 0};
    os.write(rest, sizeof(rest));
    os.close();
    try {
        load_tgv(p);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
}

TEST_CASE("unknown dtype reports byte offset 4") {
    const fs::path p = scratch() / "bad_dtype.tgv";
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << "TGV1";
    const char rest[] = {9, 1, 1, 0, 0, 0, 0};
    os.write(rest, sizeof(rest));
    os.close();
    try {
        load_tgv(p);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 4);
    }
}

TEST_CASE("truncated payload names the payload offset") {
    const fs::path p = scratch() / "trunc.tgv";
    {
        TensorT<float> t({4});
        t[0] = 1;
        save_tgv(p, t);
    }
    // Chop two bytes off the payload.
    const auto size = fs::file_size(p);
    fs::resize_file(p, size - 2);
    try {
        load_tgv(p);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 6 + 4);  // magic + dtype + ndim + one u32 dim
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
}

TEST_CASE("rank limits are enforced") {
    TensorT<float> t({1, 1, 1, 1});
    const fs::path p = scratch() / "rank.tgv";
    save_tgv(p, t);  // rank 4 is fine
    CHECK_NOTHROW(load_tgv(p));

    // Corrupt the rank byte.
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(5);
    const char nd = 7;
    f.write(&nd, 1);
    f.close();
    try {
        load_tgv(p);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 5);
    }
}
