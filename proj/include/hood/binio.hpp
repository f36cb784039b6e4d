#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hood/common.hpp"

namespace hood {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts unsupported");

// Thin little-endian binary writer/reader over fstreams. Readers track the
// byte offset so format errors can point at the failing position.
class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path.string()) {
    if (!out_) throw IoError("cannot open " + path_ + " for writing");
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void magic(const char (&m)[9]) { bytes(m, 8); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f32_array(const float* p, std::size_t n) { bytes(p, n * 4); }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed for " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw IoError("cannot open " + path_ + " for reading");
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  std::uint64_t offset() const { return offset_; }
  std::uint64_t file_size() const { return size_; }

  void bytes(void* p, std::size_t n) {
    if (offset_ + n > size_)
      throw FormatError(path_ + ": truncated, expected " + std::to_string(n) +
                            " more bytes of " + std::to_string(size_) + " total",
                        offset_);
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    offset_ += n;
  }

  void expect_magic(const char (&m)[9]) {
    char got[8];
    bytes(got, 8);
    if (std::memcmp(got, m, 8) != 0)
      throw FormatError(path_ + ": bad magic, expected \"" + std::string(m, 8) +
                            "\"",
                        0);
  }

  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  void f32_array(float* p, std::size_t n) { bytes(p, n * 4); }

  void expect_eof() {
    if (offset_ != size_)
      throw FormatError(path_ + ": " + std::to_string(size_ - offset_) +
                            " trailing bytes",
                        offset_);
  }

  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::uint64_t size_ = 0;
  std::uint64_t offset_ = 0;
};

// FNV-1a digest of a whole file, for manifest integrity checks.
std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace hood
