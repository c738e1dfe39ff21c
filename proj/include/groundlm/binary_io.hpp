#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

// Little-endian primitive readers/writers shared by the on-disk formats.
namespace glm::io {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
void write_pod(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(std::string("unexpected end of file reading ") + what);
  }
  return value;
}

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw FormatError(std::string("unexpected end of file reading ") + what);
  }
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in, const char* what,
                               std::uint32_t max_len = 1u << 20) {
  const auto n = read_pod<std::uint32_t>(in, what);
  if (n > max_len) throw FormatError(std::string("implausible length for ") + what);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, what);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* format) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4) throw FormatError(std::string(format) + ": unexpected end of file reading magic");
  if (std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string(format) + ": bad magic '" + std::string(got, 4) +
                      "' (expected '" + magic + "')");
  }
}

inline void expect_version(std::uint32_t got, std::uint32_t want, const char* format) {
  if (got != want) {
    throw FormatError(std::string(format) + ": unsupported version " + std::to_string(got) +
                      " (expected " + std::to_string(want) + ")");
  }
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace glm::io
