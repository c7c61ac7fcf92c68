#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "rolefuse/error.hpp"

// Little-endian primitives shared by the EMB1 and checkpoint formats.
namespace rolefuse::binary {

template <typename UInt>
void put_uint(std::ostream& out, UInt v) {
  char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(buf, sizeof(UInt));
}

template <typename UInt>
UInt get_uint(std::istream& in, const char* what) {
  unsigned char buf[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(UInt))) {
    throw DataError(std::string("truncated file while reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(buf[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& out, float f) { put_uint(out, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(std::istream& in, const char* what) {
  return std::bit_cast<float>(get_uint<std::uint32_t>(in, what));
}

inline void put_f64(std::ostream& out, double d) { put_uint(out, std::bit_cast<std::uint64_t>(d)); }

inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(in, what));
}

inline std::string get_bytes(std::istream& in, std::size_t n, const char* what) {
  std::string s;
  // Read in bounded chunks so a corrupt length cannot force a huge allocation.
  constexpr std::size_t kChunk = 1 << 16;
  while (s.size() < n) {
    const std::size_t want = std::min(kChunk, n - s.size());
    const std::size_t old = s.size();
    s.resize(old + want);
    if (!in.read(s.data() + old, static_cast<std::streamsize>(want))) {
      throw DataError(std::string("truncated file while reading ") + what);
    }
  }
  return s;
}

}  // namespace rolefuse::binary
