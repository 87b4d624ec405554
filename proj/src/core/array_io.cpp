#include "hivla/core/array_io.hpp"

#include <cstring>
#include <fstream>

#include "hivla/core/errors.hpp"

namespace hivla {

namespace {

constexpr char kMagic[4] = {'H', 'V', 'L', 'A'};
constexpr std::size_t kMaxDims = 4;

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v & 0xff);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i32: return 4;
    case Dtype::u8: return 1;
  }
  throw ConfigError("unknown dtype code");
}

std::size_t Array::count() const {
  std::size_t n = 1;
  for (const std::size_t d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

Array Array::from_f32(const std::vector<float>& values, std::vector<std::size_t> dims) {
  Array a;
  a.dtype = Dtype::f32;
  a.dims = std::move(dims);
  if (a.count() != values.size()) throw ConfigError("array dims do not match value count");
  a.raw.resize(values.size() * 4);
  std::memcpy(a.raw.data(), values.data(), a.raw.size());
  return a;
}

Array Array::from_f64(const std::vector<double>& values, std::vector<std::size_t> dims) {
  Array a;
  a.dtype = Dtype::f64;
  a.dims = std::move(dims);
  if (a.count() != values.size()) throw ConfigError("array dims do not match value count");
  a.raw.resize(values.size() * 8);
  std::memcpy(a.raw.data(), values.data(), a.raw.size());
  return a;
}

std::vector<float> Array::as_f32() const {
  if (dtype != Dtype::f32) throw RuntimeError("array is not f32");
  std::vector<float> v(count());
  std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

std::vector<double> Array::as_f64() const {
  if (dtype != Dtype::f64) throw RuntimeError("array is not f64");
  std::vector<double> v(count());
  std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

void write_array(std::ostream& out, const Array& a) {
  if (a.dims.empty() || a.dims.size() > kMaxDims) throw ConfigError("array rank must be 1..4");
  for (const std::size_t d : a.dims) {
    if (d == 0 || d > 0xffff) throw ConfigError("array extent out of range for container");
  }
  if (a.raw.size() != a.byte_size()) throw ConfigError("array payload size mismatch");

  std::uint8_t header[16] = {};
  std::memcpy(header, kMagic, 4);
  put_u16(header + 4, static_cast<std::uint16_t>(a.dtype));
  put_u16(header + 6, static_cast<std::uint16_t>(a.dims.size()));
  for (std::size_t i = 0; i < a.dims.size(); ++i) {
    put_u16(header + 8 + 2 * i, static_cast<std::uint16_t>(a.dims[i]));
  }
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(a.raw.data()), static_cast<std::streamsize>(a.raw.size()));
  if (!out) throw RuntimeError("array write failed");
}

Array read_array(std::istream& in) {
  std::uint8_t header[16];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw RuntimeError("array header truncated");
  if (std::memcmp(header, kMagic, 4) != 0) throw RuntimeError("bad array magic");

  Array a;
  const std::uint16_t code = get_u16(header + 4);
  if (code < 1 || code > 4) throw RuntimeError("bad array dtype code");
  a.dtype = static_cast<Dtype>(code);
  const std::uint16_t ndim = get_u16(header + 6);
  if (ndim < 1 || ndim > kMaxDims) throw RuntimeError("bad array rank");
  for (std::uint16_t i = 0; i < ndim; ++i) {
    const std::uint16_t d = get_u16(header + 8 + 2 * i);
    if (d == 0) throw RuntimeError("zero array extent");
    a.dims.push_back(d);
  }
  a.raw.resize(a.byte_size());
  in.read(reinterpret_cast<char*>(a.raw.data()), static_cast<std::streamsize>(a.raw.size()));
  if (!in) throw RuntimeError("array payload truncated");
  return a;
}

void save_array(const std::string& path, const Array& a) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open for write: " + path);
  write_array(f, a);
}

Array load_array(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open for read: " + path);
  return read_array(f);
}

}  // namespace hivla
