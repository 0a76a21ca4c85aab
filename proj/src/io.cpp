#include "tenreg/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace tenreg {

namespace {

template <typename T>
std::array<char, sizeof(T)> to_le_bytes(T v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return bytes;
}

template <typename T>
T from_le_bytes(std::array<char, sizeof(T)> bytes) {
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

constexpr std::string_view kTensorMagic = "DTEN1";
constexpr std::uint32_t kMaxOrder = 64;

}  // namespace

void BinaryWriter::magic(std::string_view m) { os_.write(m.data(), static_cast<std::streamsize>(m.size())); }

void BinaryWriter::u32(std::uint64_t v) {
  if (v > 0xffffffffULL) throw FormatError("value does not fit in u32");
  const auto b = to_le_bytes(static_cast<std::uint32_t>(v));
  os_.write(b.data(), b.size());
}

void BinaryWriter::f64(double v) {
  const auto b = to_le_bytes(v);
  os_.write(b.data(), b.size());
}

void BinaryWriter::f64s(const double* p, Index n) {
  if constexpr (std::endian::native == std::endian::little) {
    os_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
  } else {
    for (Index i = 0; i < n; ++i) f64(p[i]);
  }
}

void BinaryWriter::string(std::string_view s) {
  u32(s.size());
  os_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::dims(const Dims& d) {
  for (Index v : d) u32(static_cast<std::uint64_t>(v));
}

void BinaryReader::read_bytes(char* p, std::size_t n) {
  is_.read(p, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("unexpected end of file");
}

void BinaryReader::expect_magic(std::string_view m) {
  std::string got(m.size(), '\0');
  read_bytes(got.data(), got.size());
  if (got != m) throw FormatError("bad magic: expected " + std::string(m));
}

std::uint32_t BinaryReader::u32() {
  std::array<char, 4> b{};
  read_bytes(b.data(), b.size());
  return from_le_bytes<std::uint32_t>(b);
}

double BinaryReader::f64() {
  std::array<char, 8> b{};
  read_bytes(b.data(), b.size());
  return from_le_bytes<double>(b);
}

void BinaryReader::f64s(double* p, Index n) {
  if constexpr (std::endian::native == std::endian::little) {
    read_bytes(reinterpret_cast<char*>(p), static_cast<std::size_t>(n) * 8);
  } else {
    for (Index i = 0; i < n; ++i) p[i] = f64();
  }
}

Matrix BinaryReader::matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  f64s(m.data(), m.size());
  return m;
}

std::string BinaryReader::string() {
  const std::uint32_t n = u32();
  if (n > (1u << 20)) throw FormatError("string field too long");
  std::string s(n, '\0');
  read_bytes(s.data(), n);
  return s;
}

Dims BinaryReader::dims(Index order) {
  Dims d(static_cast<std::size_t>(order));
  for (auto& v : d) {
    v = u32();
    if (v < 1) throw FormatError("zero dimension in file");
  }
  return d;
}

void BinaryReader::expect_end() {
  if (is_.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in file");
}

void write_tensor(std::ostream& os, const DenseTensor& t) {
  BinaryWriter w(os);
  w.magic(kTensorMagic);
  w.u32(static_cast<std::uint64_t>(t.order()));
  w.dims(t.dims());
  w.f64s(t.data().data(), t.size());
}

DenseTensor read_tensor(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic(kTensorMagic);
  const std::uint32_t order = r.u32();
  if (order < 1 || order > kMaxOrder) throw FormatError("tensor order out of range");
  Dims dims = r.dims(order);
  Vector data(dims_product(dims));
  r.f64s(data.data(), data.size());
  return DenseTensor(std::move(dims), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw FormatError("write failed: " + path.string());
}

DenseTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  DenseTensor t = read_tensor(is);
  BinaryReader(is).expect_end();
  return t;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) s[static_cast<std::size_t>(k)] = digits[v & 0xf];
  return s;
}

}  // namespace tenreg
