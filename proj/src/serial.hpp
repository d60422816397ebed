#pragma once

// Little-endian binary stream helpers for the file formats.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "atk/error.hpp"

namespace atk {

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw IoError("truncated file while reading " + what);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw IoError(what + ": bad magic, not a " + std::string(magic, 4) + " file");
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

inline void expect_eof(std::istream& is, const std::string& what) {
  is.peek();
  if (!is.eof()) throw IoError(what + ": trailing bytes after expected end of file");
}

}  // namespace atk
