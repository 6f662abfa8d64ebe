#pragma once

// Little-endian primitives shared by the TBL1 and TBF1 readers/writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "twinbeam/errors.hpp"

namespace twinbeam::detail {

template <class U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) {
    bytes[k] = static_cast<unsigned char>((value >> (8 * k)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

inline void put_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

// Tracks the byte offset so format errors can say where they happened.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::size_t offset() const noexcept { return offset_; }

  void expect_magic(const char (&magic)[5]) {
    char got[4];
    read_bytes(got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + magic, 0);
    }
  }

  template <class U>
  U get_le(const char* what) {
    unsigned char bytes[sizeof(U)];
    read_bytes(reinterpret_cast<char*>(bytes), sizeof(U), what);
    U value = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) value |= static_cast<U>(bytes[k]) << (8 * k);
    return value;
  }

  std::uint16_t u16(const char* what) { return get_le<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return get_le<std::uint32_t>(what); }
  float f32(const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(what)); }

  void read_bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw FormatError(std::string("truncated input while reading ") + what, offset_ + got);
    }
    offset_ += n;
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace twinbeam::detail
