#pragma once

#include <filesystem>

#include "dpt/tensor.hpp"

namespace dpt {

// Single-tensor binary container:
//   bytes 0..7   magic "DPTENS1\0"
//   byte  8      dtype: 0 = f32, 1 = f64
//   byte  9      rank (1..8)
//   then rank    little-endian u64 extents
//   then         raw little-endian scalars, row-major
enum class DType : uint8_t { F32 = 0, F64 = 1 };

struct TensorHeader {
  DType dtype;
  Shape shape;
};

template <class T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::F32 : DType::F64;
}

// Writes t's scalars as `as` (converting if needed; f64 -> f32 narrows).
template <class T>
void write_tensor(const std::filesystem::path& path, const TensorT<T>& t, DType as);

template <class T>
void write_tensor(const std::filesystem::path& path, const TensorT<T>& t) {
  write_tensor(path, t, dtype_of<T>());
}

// Header only (shape/dtype probe without reading the payload).
TensorHeader peek_tensor(const std::filesystem::path& path);

// Reads and converts to T.  Widening (f32 file into f64 tensor) is always
// allowed; narrowing is refused unless allow_narrow is set, since it would
// silently lose bits.
template <class T>
TensorT<T> read_tensor(const std::filesystem::path& path, bool allow_narrow = false);

}  // namespace dpt
