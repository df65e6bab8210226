#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "mvai/geometry.hpp"

namespace mvai {

class ObjParseError : public std::runtime_error {
 public:
  ObjParseError(const std::string& file, int line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Reads "v" and triangular "f" records (v, v/vt, v//vn and negative indices);
// every other record type is ignored.
Mesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

}  // namespace mvai
