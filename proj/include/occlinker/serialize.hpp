#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "occlinker/tensor.hpp"

namespace occlinker {

// OCLT tensor file: magic "OCLT", u32 version, u32 rank, u64 dims[rank],
// then row-major data as little-endian 64-bit floats.
namespace oclt {

constexpr uint32_t kVersion = 1;

namespace detail_io {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline bool get_u32(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_u64(std::istream& is, uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_f64(std::istream& is, double& v) {
  uint64_t bits;
  if (!get_u64(is, bits)) return false;
  std::memcpy(&v, &bits, 8);
  return true;
}

}  // namespace detail_io

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("oclt: cannot open for writing: " + path.string());
  os.write("OCLT", 4);
  detail_io::put_u32(os, kVersion);
  detail_io::put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape()) detail_io::put_u64(os, static_cast<uint64_t>(d));
  for (Real v : t.data()) detail_io::put_f64(os, static_cast<double>(v));
  if (!os) throw IoError("oclt: write failed: " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("oclt: cannot open: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "OCLT", 4) != 0)
    throw IoError("oclt: bad magic in " + path.string());
  uint32_t version = 0, rank = 0;
  if (!detail_io::get_u32(is, version)) throw IoError("oclt: truncated header in " + path.string());
  if (version != kVersion)
    throw IoError("oclt: unsupported version " + std::to_string(version) + " in " + path.string());
  if (!detail_io::get_u32(is, rank)) throw IoError("oclt: truncated header in " + path.string());
  if (rank > 16) throw IoError("oclt: implausible rank " + std::to_string(rank) + " in " + path.string());
  Shape shape(rank);
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    uint64_t d = 0;
    if (!detail_io::get_u64(is, d)) throw IoError("oclt: truncated dims in " + path.string());
    if (d == 0 || d > (1ULL << 32)) throw IoError("oclt: corrupted dim field in " + path.string());
    shape[i] = static_cast<int64_t>(d);
    n *= shape[i];
  }
  std::vector<Real> data(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double v;
    if (!detail_io::get_f64(is, v)) throw IoError("oclt: truncated data in " + path.string());
    data[static_cast<size_t>(i)] = static_cast<Real>(v);
  }
  char extra;
  if (is.read(&extra, 1)) throw IoError("oclt: trailing bytes in " + path.string());
  try {
    return Tensor::from_data(std::move(shape), std::move(data), "oclt:" + path.filename().string());
  } catch (const ValueError& e) {
    throw IoError(std::string("oclt: ") + e.what());
  }
}

}  // namespace oclt
}  // namespace occlinker
