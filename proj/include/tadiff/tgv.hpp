#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "tadiff/tensor.hpp"

namespace tadiff {

// Binary array container. Layout, little-endian throughout:
//   magic "TGV1" | dtype u8 (1 = f32, 2 = u8) | ndim u8 | ndim x u32 dims | payload
enum class TgvDtype : uint8_t { f32 = 1, u8 = 2 };

struct TgvArray {
    TgvDtype dtype = TgvDtype::f32;
    std::vector<int> shape;
    std::vector<float> f32;
    std::vector<uint8_t> u8;
};

// Stream forms; `base` offsets error reporting when the array is embedded in
// a larger file (checkpoints).
void write_tgv(std::ostream& os, const TensorT<float>& t);
void write_tgv(std::ostream& os, const TensorT<uint8_t>& t);
TgvArray read_tgv(std::istream& is, std::size_t base = 0);

// File forms; writes go through a temporary and an atomic rename.
void save_tgv(const std::filesystem::path& path, const TensorT<float>& t);
void save_tgv(const std::filesystem::path& path, const TensorT<uint8_t>& t);
TgvArray load_tgv(const std::filesystem::path& path);
TensorT<float> load_tgv_f32(const std::filesystem::path& path);
TensorT<uint8_t> load_tgv_u8(const std::filesystem::path& path);

}  // namespace tadiff
