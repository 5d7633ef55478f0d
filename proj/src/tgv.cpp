#include "tadiff/tgv.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tadiff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "TGV i/o assumes a little-endian host");

namespace tadiff {
namespace {

constexpr char kMagic[4] = {'T', 'G', 'V', '1'};
constexpr int kMaxRank = 4;

void write_header(std::ostream& os, TgvDtype dtype, const std::vector<int>& shape) {
    os.write(kMagic, 4);
    const uint8_t d = static_cast<uint8_t>(dtype);
    const uint8_t nd = static_cast<uint8_t>(shape.size());
    os.write(reinterpret_cast<const char*>(&d), 1);
    os.write(reinterpret_cast<const char*>(&nd), 1);
    for (int dim : shape) {
        const uint32_t v = static_cast<uint32_t>(dim);
        os.write(reinterpret_cast<const char*>(&v), 4);
    }
}

void check_rank(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > kMaxRank)
        throw std::invalid_argument("TGV supports ranks 1-4");
}

template <typename T>
void atomic_save(const std::filesystem::path& path, const TensorT<T>& t) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        write_tgv(os, t);
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_tgv(std::ostream& os, const TensorT<float>& t) {
    check_rank(t.shape());
    write_header(os, TgvDtype::f32, t.shape());
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

void write_tgv(std::ostream& os, const TensorT<uint8_t>& t) {
    check_rank(t.shape());
    write_header(os, TgvDtype::u8, t.shape());
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel()));
}

TgvArray read_tgv(std::istream& is, std::size_t base) {
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("TGV magic mismatch, expected \"TGV1\"", base + 0);

    uint8_t dtype_raw = 0, ndim = 0;
    is.read(reinterpret_cast<char*>(&dtype_raw), 1);
    if (is.gcount() != 1 || (dtype_raw != 1 && dtype_raw != 2))
        throw FormatError("TGV unknown dtype " + std::to_string(dtype_raw), base + 4);
    is.read(reinterpret_cast<char*>(&ndim), 1);
    if (is.gcount() != 1 || ndim < 1 || ndim > kMaxRank)
        throw FormatError("TGV rank must be 1-4, got " + std::to_string(ndim), base + 5);

    TgvArray arr;
    arr.dtype = static_cast<TgvDtype>(dtype_raw);
    std::size_t numel = 1;
    for (int i = 0; i < ndim; ++i) {
        uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        if (is.gcount() != 4)
            throw FormatError("TGV truncated dimension header", base + 6 + 4 * i);
        if (v == 0) throw FormatError("TGV zero dimension", base + 6 + 4 * i);
        arr.shape.push_back(static_cast<int>(v));
        numel *= v;
    }

    const std::size_t payload_at = base + 6 + 4 * static_cast<std::size_t>(ndim);
    if (arr.dtype == TgvDtype::f32) {
        arr.f32.resize(numel);
        is.read(reinterpret_cast<char*>(arr.f32.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (static_cast<std::size_t>(is.gcount()) != numel * sizeof(float))
            throw FormatError("TGV truncated payload, expected " +
                                  std::to_string(numel * sizeof(float)) + " bytes",
                              payload_at);
    } else {
        arr.u8.resize(numel);
        is.read(reinterpret_cast<char*>(arr.u8.data()), static_cast<std::streamsize>(numel));
        if (static_cast<std::size_t>(is.gcount()) != numel)
            throw FormatError("TGV truncated payload, expected " + std::to_string(numel) +
                                  " bytes",
                              payload_at);
    }
    return arr;
}

void save_tgv(const std::filesystem::path& path, const TensorT<float>& t) { atomic_save(path, t); }
void save_tgv(const std::filesystem::path& path, const TensorT<uint8_t>& t) { atomic_save(path, t); }

TgvArray load_tgv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_tgv(is, 0);
}

TensorT<float> load_tgv_f32(const std::filesystem::path& path) {
    TgvArray arr = load_tgv(path);
    if (arr.dtype != TgvDtype::f32)
        throw FormatError("expected f32 array in " + path.string(), 4);
    TensorT<float> t(arr.shape);
    std::copy(arr.f32.begin(), arr.f32.end(), t.data());
    return t;
}

TensorT<uint8_t> load_tgv_u8(const std::filesystem::path& path) {
    TgvArray arr = load_tgv(path);
    if (arr.dtype != TgvDtype::u8)
        throw FormatError("expected u8 array in " + path.string(), 4);
    TensorT<uint8_t> t(arr.shape);
    std::copy(arr.u8.begin(), arr.u8.end(), t.data());
    return t;
}

}  // namespace tadiff
