#pragma once

// Little-endian primitives shared by the checkpoint and FGRID codecs.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bldgnet/error.hpp"

namespace bldg::detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xFFu),
      static_cast<unsigned char>((v >> 8) & 0xFFu),
      static_cast<unsigned char>((v >> 16) & 0xFFu),
      static_cast<unsigned char>((v >> 24) & 0xFFu)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw ParseError(std::string("truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::string read_string(std::istream& in, std::uint32_t n,
                               const char* what) {
  if (n > (1u << 20)) throw ParseError(std::string("implausible ") + what +
                                       " length " + std::to_string(n));
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint32_t>(in.gcount()) != n)
    throw ParseError(std::string("truncated ") + what);
  return s;
}

inline void write_f32_array(std::ostream& out, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b)
      buf[i * 4 + static_cast<std::size_t>(b)] =
          static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void read_f32_array(std::istream& in, std::span<float> values,
                           const char* what) {
  std::vector<unsigned char> buf(values.size() * 4);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw ParseError(std::string("truncated data for ") + what);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(buf[i * 4 + static_cast<std::size_t>(b)])
              << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
}

}  // namespace bldg::detail
