#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hivla {

enum class Dtype : std::uint16_t { f32 = 1, f64 = 2, i32 = 3, u8 = 4 };

std::size_t dtype_size(Dtype d);

/// Dense n-dimensional array with a fixed 16-byte binary header:
///   bytes 0..3   magic "HVLA"
///   bytes 4..5   dtype code, little-endian u16
///   bytes 6..7   ndim, little-endian u16 (1..4)
///   bytes 8..15  four little-endian u16 extents (unused trailing extents 0)
/// Payload follows in C order (last dimension fastest), little-endian.
struct Array {
  Dtype dtype = Dtype::f32;
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> raw;

  std::size_t count() const;
  std::size_t byte_size() const { return count() * dtype_size(dtype); }

  static Array from_f32(const std::vector<float>& values, std::vector<std::size_t> dims);
  static Array from_f64(const std::vector<double>& values, std::vector<std::size_t> dims);
  std::vector<float> as_f32() const;
  std::vector<double> as_f64() const;
};

void write_array(std::ostream& out, const Array& a);
Array read_array(std::istream& in);

void save_array(const std::string& path, const Array& a);
Array load_array(const std::string& path);

}  // namespace hivla
