#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mvai {

// Raised for malformed or truncated binary files. `offset` is the byte
// position at which decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Little-endian writer accumulating into a byte buffer.
class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u32(std::uint32_t v);
  void f32(float v);
  void f32s(std::span<const float> values);
  void bytes(std::string_view s);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

// Little-endian reader over an in-memory byte buffer.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}
  static ByteReader from_file(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  float f32();
  void f32s(std::span<float> out);
  std::string bytes(std::size_t n);

  std::uint64_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  // Rejects trailing garbage.
  void expect_end() const;

 private:
  void need(std::size_t n, const char* what) const;

  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace mvai
