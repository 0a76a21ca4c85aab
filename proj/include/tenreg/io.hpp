#pragma once

// Little-endian binary streams and the .dten tensor file format:
//   "DTEN1" | u32 order | order x u32 dims | prod(dims) x f64 in vec() order.

#include "tenreg/errors.hpp"
#include "tenreg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace tenreg {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void magic(std::string_view m);
  void u32(std::uint64_t v);
  void f64(double v);
  void f64s(const double* p, Index n);
  void matrix(const Matrix& m) { f64s(m.data(), m.size()); }
  void string(std::string_view s);
  void dims(const Dims& d);

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  void expect_magic(std::string_view m);
  std::uint32_t u32();
  double f64();
  void f64s(double* p, Index n);
  Matrix matrix(Index rows, Index cols);
  std::string string();
  Dims dims(Index order);
  /// Throws unless the stream is exhausted.
  void expect_end();

 private:
  void read_bytes(char* p, std::size_t n);
  std::istream& is_;
};

void write_tensor(std::ostream& os, const DenseTensor& t);
DenseTensor read_tensor(std::istream& is);

/// 64-bit FNV-1a, used to fingerprint configurations.
std::uint64_t fnv1a64(std::string_view bytes);
/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

void save_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor load_tensor(const std::filesystem::path& path);

}  // namespace tenreg
