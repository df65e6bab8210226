#include "mvai/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mvai {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void ByteWriter::magic(std::string_view tag) { bytes(tag); }

void ByteWriter::u32(std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  buf_.insert(buf_.end(), b, b + 4);
}

void ByteWriter::f32(float v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  buf_.insert(buf_.end(), b, b + 4);
}

void ByteWriter::f32s(std::span<const float> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  buf_.insert(buf_.end(), p, p + values.size_bytes());
}

void ByteWriter::bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
  return ByteReader(read_file_bytes(path));
}

void ByteReader::need(std::size_t n, const char* what) const {
  if (remaining() < n) {
    throw FormatError(std::string("truncated file: expected ") + std::to_string(n) +
                          " more bytes for " + what + ", found " + std::to_string(remaining()),
                      pos_);
  }
}

void ByteReader::expect_magic(std::string_view tag) {
  need(tag.size(), "magic");
  if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) {
    throw FormatError("bad magic: expected \"" + std::string(tag) + "\"", pos_);
  }
  pos_ += tag.size();
}

std::uint32_t ByteReader::u32() {
  need(4, "u32");
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

float ByteReader::f32() {
  need(4, "f32");
  float v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

void ByteReader::f32s(std::span<float> out) {
  need(out.size_bytes(), "f32 array");
  std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

std::string ByteReader::bytes(std::size_t n) {
  need(n, "byte string");
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::expect_end() const {
  if (remaining() != 0) {
    throw FormatError(std::to_string(remaining()) + " unexpected trailing bytes", pos_);
  }
}

}  // namespace mvai
