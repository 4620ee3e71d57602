#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "painforge/tensor/tensor.hpp"

namespace painforge {

// On-disk tensor layout, always little-endian:
//   "P3DT" | u8 version (1) | u8 dtype | u8 rank | u8 reserved (0)
//   | rank x u32 dims | row-major data
enum class DType : std::uint8_t { F32 = 1, F64 = 2, U8 = 3 };

inline constexpr std::uint8_t kTensorFormatVersion = 1;

struct TensorBlob {
  DType dtype = DType::F64;
  Shape shape;
  std::vector<double> values;  // widened to double regardless of dtype
};

/// Serializes values with the given element type. F32 rounds to nearest; U8
/// requires integral values in [0, 255].
std::string encode_tensor(const Shape& shape, std::span<const double> values, DType dtype);
TensorBlob decode_tensor(std::string_view bytes);

/// Writes via a temporary file and rename so readers never see partial files.
void write_tensor_file(const std::filesystem::path& path, const Shape& shape, std::span<const double> values,
                       DType dtype);
TensorBlob read_tensor_file(const std::filesystem::path& path);

/// Atomic whole-file write shared by every artifact writer.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace painforge
