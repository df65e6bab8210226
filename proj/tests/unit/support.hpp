#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "mvai/body_model.hpp"
#include "mvai/cuboid.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mvai_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline mvai::Points random_points(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  mvai::Points p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
  return p;
}

template <class Tag>
mvai::PointSequence<Tag> random_sequence(int frames, int points, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<float> g(0.0f, static_cast<float>(scale));
  auto s = mvai::PointSequence<Tag>::zeros(frames, points);
  for (auto& v : s.data()) v = g(rng);
  return s;
}

inline mvai::MeshCuboid random_cuboid(int frames, int points, std::mt19937_64& rng, double scale = 1.0) {
  return random_sequence<mvai::CuboidTag>(frames, points, rng, scale);
}

inline mvai::JointSeq random_joints(int frames, int joints, std::mt19937_64& rng, double scale = 1.0) {
  return random_sequence<mvai::JointTag>(frames, joints, rng, scale);
}

inline Eigen::MatrixXd row_stochastic(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  for (int r = 0; r < rows; ++r) m.row(r) /= m.row(r).sum();
  return m;
}

// Two-bone chain along +x with joints at the origin, (1,0,0) and (2,0,0),
// each regressed from a vertex placed on it. Vertex 2 sits off the second
// bone; vertices 1..3 are skinned to joint 1, vertex 0 to the root.
inline mvai::BodyModel chain_model() {
  mvai::Points verts(4, 3);
  verts << 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.5, 0.2, 0.0, 2.0, 0.0, 0.0;
  mvai::Faces faces(2, 3);
  faces << 0, 1, 2, 1, 3, 2;
  Eigen::MatrixXd skin = Eigen::MatrixXd::Zero(4, 3);
  skin(0, 0) = 1.0;
  skin(1, 1) = 1.0;
  skin(2, 1) = 1.0;
  skin(3, 1) = 1.0;
  Eigen::MatrixXd reg = Eigen::MatrixXd::Zero(3, 4);
  reg(0, 0) = 1.0;
  reg(1, 1) = 1.0;
  reg(2, 3) = 1.0;
  mvai::Points dir = mvai::Points::Zero(4, 3);
  dir.col(1).setOnes();
  return mvai::BodyModel(verts, faces, {dir}, skin, reg, {-1, 0, 1});
}

}  // namespace testing
