#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "skipmid/errors.hpp"

namespace skipmid {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed");
}

inline void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
inline void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
inline void write_f32(std::ofstream& out, float v) { write_bytes(out, &v, 4); }
inline void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, 8); }

inline void write_string(std::ofstream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline void read_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError(std::string("truncated file while reading ") + what);
  }
}

inline std::uint32_t read_u32(std::ifstream& in, const char* what) {
  std::uint32_t v = 0;
  read_bytes(in, &v, 4, what);
  return v;
}

inline std::uint64_t read_u64(std::ifstream& in, const char* what) {
  std::uint64_t v = 0;
  read_bytes(in, &v, 8, what);
  return v;
}

inline float read_f32(std::ifstream& in, const char* what) {
  float v = 0;
  read_bytes(in, &v, 4, what);
  return v;
}

inline double read_f64(std::ifstream& in, const char* what) {
  double v = 0;
  read_bytes(in, &v, 8, what);
  return v;
}

inline std::string read_string(std::ifstream& in, const char* what, std::uint32_t max_len) {
  const std::uint32_t n = read_u32(in, what);
  if (n > max_len) throw IoError(std::string("unreasonable string length in ") + what);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, what);
  return s;
}

}  // namespace skipmid
