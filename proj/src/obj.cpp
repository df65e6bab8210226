#include "mvai/obj.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace mvai {

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

}  // namespace

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  const std::string name = path.string();
  std::vector<Eigen::RowVector3d> verts;
  std::vector<Eigen::RowVector3i> faces;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream is(line);
    std::string tag;
    if (!(is >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::RowVector3d p;
      for (int c = 0; c < 3; ++c) {
        std::string tok;
        if (!(is >> tok)) throw ObjParseError(name, lineno, "vertex needs three coordinates");
        double v = 0.0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
          throw ObjParseError(name, lineno, "bad coordinate '" + tok + "'");
        }
        p[c] = v;
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (is >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long v = 0;
        const auto r = std::from_chars(head.data(), head.data() + head.size(), v);
        if (r.ec != std::errc() || r.ptr != head.data() + head.size() || v == 0) {
          throw ObjParseError(name, lineno, "bad face index '" + tok + "'");
        }
        const long n = static_cast<long>(verts.size());
        const long zero_based = v > 0 ? v - 1 : n + v;
        if (zero_based < 0 || zero_based >= n) {
          throw ObjParseError(name, lineno, "face index " + std::to_string(v) + " out of range");
        }
        idx.push_back(static_cast<int>(zero_based));
      }
      if (idx.size() != 3) {
        throw ObjParseError(name, lineno, "only triangular faces are supported (got " +
                                              std::to_string(idx.size()) + " vertices)");
      }
      faces.emplace_back(idx[0], idx[1], idx[2]);
    }
  }
  if (verts.empty()) throw ObjParseError(name, lineno, "no vertices");
  Mesh m;
  m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.row(i) = verts[i];
  m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) m.faces.row(i) = faces[i];
  return m;
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::string out;
  out.reserve(static_cast<std::size_t>(mesh.vertices.rows()) * 40);
  for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
    out += "v";
    for (int c = 0; c < 3; ++c) {
      out += ' ';
      append_number(out, mesh.vertices(v, c));
    }
    out += '\n';
  }
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    out += "f " + std::to_string(mesh.faces(f, 0) + 1) + " " + std::to_string(mesh.faces(f, 1) + 1) +
           " " + std::to_string(mesh.faces(f, 2) + 1) + "\n";
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << out;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace mvai
