#include "painforge/tensor/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "painforge/core/errors.hpp"

namespace painforge {
namespace {

constexpr char kMagic[4] = {'P', '3', 'D', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(U) > bytes.size()) throw DataError("tensor blob truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return v;
}

std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::F32:
      return 4;
    case DType::F64:
      return 8;
    case DType::U8:
      return 1;
  }
  throw DataError("unknown dtype");
}

}  // namespace

std::string encode_tensor(const Shape& shape, std::span<const double> values, DType dtype) {
  if (shape.size() > std::numeric_limits<std::uint8_t>::max()) throw DimensionError("tensor rank too large");
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("encode_tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kTensorFormatVersion));
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(shape.size()));
  out.push_back('\0');
  for (auto d : shape) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("dimension exceeds u32");
    put_le(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + values.size() * element_size(dtype));
  for (double v : values) {
    switch (dtype) {
      case DType::F32:
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        break;
      case DType::F64:
        put_le(out, std::bit_cast<std::uint64_t>(v));
        break;
      case DType::U8:
        if (!(v >= 0.0 && v <= 255.0) || std::floor(v) != v) {
          throw ParameterError("encode_tensor: value " + std::to_string(v) + " is not a u8");
        }
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(v)));
        break;
    }
  }
  return out;
}

TensorBlob decode_tensor(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) throw DataError("not a P3DT tensor blob");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kTensorFormatVersion) throw DataError("unsupported P3DT version " + std::to_string(version));
  const auto code = static_cast<std::uint8_t>(bytes[5]);
  if (code < 1 || code > 3) throw DataError("unknown P3DT dtype code " + std::to_string(code));
  TensorBlob blob;
  blob.dtype = static_cast<DType>(code);
  const auto rank = static_cast<std::uint8_t>(bytes[6]);
  std::size_t pos = 8;
  for (std::uint8_t i = 0; i < rank; ++i) blob.shape.push_back(get_le<std::uint32_t>(bytes, pos));
  const std::size_t n = shape_numel(blob.shape);
  if (bytes.size() - pos != n * element_size(blob.dtype)) throw DataError("P3DT payload size mismatch");
  blob.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (blob.dtype) {
      case DType::F32:
        blob.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
        break;
      case DType::F64:
        blob.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
        break;
      case DType::U8:
        blob.values[i] = static_cast<unsigned char>(bytes[pos++]);
        break;
    }
  }
  return blob;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_tensor_file(const std::filesystem::path& path, const Shape& shape, std::span<const double> values,
                       DType dtype) {
  write_file_atomic(path, encode_tensor(shape, values, dtype));
}

TensorBlob read_tensor_file(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

}  // namespace painforge
