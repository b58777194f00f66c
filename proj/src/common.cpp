#include "stylus/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace stylus {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io, "cannot open file: " + path);
  f.seekg(0, std::ios::end);
  std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) fail(Errc::io, "cannot read file: " + path);
  return buf;
}

void write_file_bytes(const std::string& path, const void* data, size_t len) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open file for writing: " + path);
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!f) fail(Errc::io, "cannot write file: " + path);
}

std::string read_file_text(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

std::string dtos(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::string ftos(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return std::string(buf);
}

}  // namespace stylus
