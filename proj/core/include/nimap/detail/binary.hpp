#pragma once

// Little-endian primitives for the binary file formats. Reads throw
// FormatError on truncation so callers surface corrupt files uniformly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "nimap/errors.hpp"

namespace nimap::detail {

template <typename T>
void writeRaw(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T readRaw(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) {
    throw FormatError("truncated stream");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void writeU32(std::ostream& out, std::uint32_t v) { writeRaw(out, v); }
inline void writeU64(std::ostream& out, std::uint64_t v) { writeRaw(out, v); }
inline void writeI32(std::ostream& out, std::int32_t v) { writeRaw(out, v); }
inline void writeI64(std::ostream& out, std::int64_t v) { writeRaw(out, v); }
inline void writeF32(std::ostream& out, float v) { writeRaw(out, v); }
inline void writeF64(std::ostream& out, double v) { writeRaw(out, v); }

inline std::uint32_t readU32(std::istream& in) { return readRaw<std::uint32_t>(in); }
inline std::uint64_t readU64(std::istream& in) { return readRaw<std::uint64_t>(in); }
inline std::int32_t readI32(std::istream& in) { return readRaw<std::int32_t>(in); }
inline std::int64_t readI64(std::istream& in) { return readRaw<std::int64_t>(in); }
inline float readF32(std::istream& in) { return readRaw<float>(in); }
inline double readF64(std::istream& in) { return readRaw<double>(in); }

inline void writeMagic(std::ostream& out, const char magic[4]) { out.write(magic, 4); }

inline void expectMagic(std::istream& in, const char magic[4], const char* what) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0) {
    throw FormatError(std::string(what) + ": bad magic");
  }
}

inline void expectVersion(std::istream& in, std::uint32_t expected, const char* what) {
  const std::uint32_t v = readU32(in);
  if (v != expected) {
    throw FormatError(std::string(what) + ": unsupported version " + std::to_string(v));
  }
}

}  // namespace nimap::detail
