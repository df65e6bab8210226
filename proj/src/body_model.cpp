#include "mvai/body_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mvai/binary_io.hpp"

namespace mvai {

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kRootSentinel = 0xFFFFFFFFu;
constexpr double kRowSumTolerance = 1e-9;

void check_row_stochastic(const Eigen::MatrixXd& m, const char* name) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(name) + " has non-finite entries");
  if ((m.array() < 0.0).any()) throw std::invalid_argument(std::string(name) + " has negative entries");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double s = m.row(r).sum();
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      throw std::invalid_argument(std::string(name) + " row " + std::to_string(r) +
                                  " sums to " + std::to_string(s) + ", expected 1");
    }
  }
}

}  // namespace

PoseParams PoseParams::zero(int num_joints) {
  PoseParams p;
  p.rotations = Points::Zero(num_joints, 3);
  return p;
}

Eigen::VectorXd Skeleton::bone_lengths() const {
  Eigen::VectorXd len = Eigen::VectorXd::Zero(joints.rows());
  for (Eigen::Index c = 1; c < joints.rows(); ++c) {
    len[c] = (joints.row(c) - joints.row(parents[c])).norm();
  }
  return len;
}

BodyModel::BodyModel(Points template_vertices, Faces faces, std::vector<Points> shape_basis,
                     Eigen::MatrixXd skinning_weights, Eigen::MatrixXd joint_regressor,
                     std::vector<int> parents)
    : template_(std::move(template_vertices)),
      faces_(std::move(faces)),
      basis_(std::move(shape_basis)),
      skinning_(std::move(skinning_weights)),
      regressor_(std::move(joint_regressor)),
      parents_(std::move(parents)) {
  const Eigen::Index n = template_.rows();
  const Eigen::Index k = static_cast<Eigen::Index>(parents_.size());
  if (n < 1) throw std::invalid_argument("body model needs at least one vertex");
  if (!template_.allFinite()) throw std::invalid_argument("template vertices are not finite");
  order_ = preorder(parents_);
  for (Eigen::Index f = 0; f < faces_.rows(); ++f) {
    for (int c = 0; c < 3; ++c) {
      if (faces_(f, c) < 0 || faces_(f, c) >= n) {
        throw std::invalid_argument("face " + std::to_string(f) + " references vertex " +
                                    std::to_string(faces_(f, c)) + " out of range");
      }
    }
  }
  for (std::size_t s = 0; s < basis_.size(); ++s) {
    if (basis_[s].rows() != n) {
      throw std::invalid_argument("shape basis " + std::to_string(s) + " has wrong vertex count");
    }
    if (!basis_[s].allFinite()) throw std::invalid_argument("shape basis is not finite");
  }
  if (skinning_.rows() != n || skinning_.cols() != k) {
    throw std::invalid_argument("skinning weights must be N x k");
  }
  if (regressor_.rows() != k || regressor_.cols() != n) {
    throw std::invalid_argument("joint regressor must be k x N");
  }
  check_row_stochastic(skinning_, "skinning weights");
  check_row_stochastic(regressor_, "joint regressor");
}

Mesh shape_mesh(const BodyModel& model, const ShapeParams& shape) {
  if (shape.coeffs.size() != model.num_shape_coeffs()) {
    throw std::invalid_argument("shape has " + std::to_string(shape.coeffs.size()) +
                                " coefficients, model expects " +
                                std::to_string(model.num_shape_coeffs()));
  }
  if (!shape.coeffs.allFinite()) throw std::invalid_argument("shape coefficients are not finite");
  Mesh mesh{model.template_vertices(), model.faces()};
  for (int s = 0; s < model.num_shape_coeffs(); ++s) {
    mesh.vertices += shape.coeffs[s] * model.shape_basis()[s];
  }
  return mesh;
}

Points regress_joints(const BodyModel& model, const Points& vertices) {
  if (vertices.rows() != model.num_vertices()) {
    throw std::invalid_argument("mesh has " + std::to_string(vertices.rows()) +
                                " vertices, regressor expects " +
                                std::to_string(model.num_vertices()));
  }
  return model.joint_regressor() * vertices;
}

JointFrames forward_kinematics(const BodyModel& model, const Points& rest_joints,
                               const PoseParams& pose, std::span<const double> bone_scales) {
  const int k = model.num_joints();
  if (pose.rotations.rows() != k) {
    throw std::invalid_argument("pose has " + std::to_string(pose.rotations.rows()) +
                                " joint rotations, model has " + std::to_string(k));
  }
  if (!pose.rotations.allFinite() || !pose.translation.allFinite()) {
    throw std::invalid_argument("pose parameters are not finite");
  }
  if (!bone_scales.empty() && static_cast<int>(bone_scales.size()) != k) {
    throw std::invalid_argument("bone_scales must have one entry per joint");
  }
  JointFrames frames;
  frames.rotations.resize(k);
  frames.rest_joints = rest_joints;
  frames.posed_joints.resize(k, 3);
  const auto& parents = model.parents();
  for (int j : model.joint_order()) {
    const Eigen::Matrix3d local = rodrigues(pose.rotations.row(j).transpose());
    const int p = parents[j];
    if (p == kNoParent) {
      frames.rotations[j] = local;
      frames.posed_joints.row(j) = rest_joints.row(j);
      continue;
    }
    frames.rotations[j] = frames.rotations[p] * local;
    Eigen::Vector3d offset = (rest_joints.row(j) - rest_joints.row(p)).transpose();
    if (!bone_scales.empty()) offset *= bone_scales[j];
    frames.posed_joints.row(j) =
        frames.posed_joints.row(p) + (frames.rotations[p] * offset).transpose();
  }
  return frames;
}

Points skin_points(const Points& rest_vertices, const Eigen::MatrixXd& weights,
                   const JointFrames& frames, const Eigen::Vector3d& translation) {
  const Eigen::Index n = rest_vertices.rows();
  const Eigen::Index k = static_cast<Eigen::Index>(frames.rotations.size());
  if (weights.rows() != n || weights.cols() != k) {
    throw std::invalid_argument("skinning weights do not match vertices/joints");
  }
  Points out = Points::Zero(n, 3);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Matrix3d& r = frames.rotations[j];
    const Eigen::RowVector3d pj = frames.rest_joints.row(j);
    const Eigen::RowVector3d qj = frames.posed_joints.row(j);
    for (Eigen::Index v = 0; v < n; ++v) {
      const double w = weights(v, j);
      if (w == 0.0) continue;
      out.row(v) += w * ((rest_vertices.row(v) - pj) * r.transpose() + qj);
    }
  }
  out.rowwise() += translation.transpose();
  return out;
}

Mesh pose_mesh(const BodyModel& model, const ShapeParams& shape, const PoseParams& pose,
               std::span<const double> bone_scales) {
  Mesh rest = shape_mesh(model, shape);
  const Points joints = regress_joints(model, rest.vertices);
  const JointFrames frames = forward_kinematics(model, joints, pose, bone_scales);
  rest.vertices = skin_points(rest.vertices, model.skinning_weights(), frames, pose.translation);
  return rest;
}

Skeleton skeleton_of(const BodyModel& model, const Points& vertices) {
  return Skeleton{regress_joints(model, vertices), model.parents()};
}

void save_body_model(const std::filesystem::path& path, const BodyModel& model) {
  const auto n = static_cast<std::uint32_t>(model.num_vertices());
  const auto f = static_cast<std::uint32_t>(model.faces().rows());
  const auto s = static_cast<std::uint32_t>(model.num_shape_coeffs());
  const auto k = static_cast<std::uint32_t>(model.num_joints());
  ByteWriter w;
  w.magic("MBDY");
  w.u32(kModelVersion);
  w.u32(n);
  w.u32(f);
  w.u32(s);
  w.u32(k);
  auto put_points = [&](const Points& p) {
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (int c = 0; c < 3; ++c) w.f32(static_cast<float>(p(r, c)));
  };
  put_points(model.template_vertices());
  for (Eigen::Index r = 0; r < model.faces().rows(); ++r)
    for (int c = 0; c < 3; ++c) w.u32(static_cast<std::uint32_t>(model.faces()(r, c)));
  for (const auto& b : model.shape_basis()) put_points(b);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < k; ++c) w.f32(static_cast<float>(model.skinning_weights()(r, c)));
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < n; ++c) w.f32(static_cast<float>(model.joint_regressor()(r, c)));
  for (int p : model.parents()) w.u32(p == kNoParent ? kRootSentinel : static_cast<std::uint32_t>(p));
  w.save(path);
}

BodyModel load_body_model(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("MBDY");
  const auto version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw FormatError("unsupported MBDY version " + std::to_string(version), version_at);
  }
  const std::uint32_t n = r.u32(), f = r.u32(), s = r.u32(), k = r.u32();
  const std::uint64_t expected = 4ull * (3ull * n + 3ull * f + 3ull * s * n + 2ull * n * k + k);
  if (r.remaining() != expected) {
    throw FormatError("MBDY payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(expected),
                      r.offset());
  }
  auto get_points = [&](Eigen::Index rows) {
    Points p(rows, 3);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (int c = 0; c < 3; ++c) p(i, c) = r.f32();
    return p;
  };
  Points tmpl = get_points(n);
  Faces faces(f, 3);
  for (std::uint32_t i = 0; i < f; ++i)
    for (int c = 0; c < 3; ++c) faces(i, c) = static_cast<int>(r.u32());
  std::vector<Points> basis;
  for (std::uint32_t i = 0; i < s; ++i) basis.push_back(get_points(n));
  Eigen::MatrixXd skin(n, k), reg(k, n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t c = 0; c < k; ++c) skin(i, c) = r.f32();
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t c = 0; c < n; ++c) reg(i, c) = r.f32();
  std::vector<int> parents(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint32_t p = r.u32();
    parents[i] = p == kRootSentinel ? kNoParent : static_cast<int>(p);
  }
  r.expect_end();
  return BodyModel(std::move(tmpl), std::move(faces), std::move(basis), std::move(skin),
                   std::move(reg), std::move(parents));
}

Eigen::MatrixXd quantize_row_stochastic(const Eigen::MatrixXd& weights) {
  constexpr double kScale = 16777216.0;  // 2^24
  Eigen::MatrixXd q(weights.rows(), weights.cols());
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    const double total = weights.row(r).sum();
    std::int64_t sum = 0;
    Eigen::Index argmax = 0;
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      const auto units = static_cast<std::int64_t>(std::llround(weights(r, c) / total * kScale));
      q(r, c) = static_cast<double>(units);
      sum += units;
      if (q(r, c) > q(r, argmax)) argmax = c;
    }
    q(r, argmax) += static_cast<double>(static_cast<std::int64_t>(kScale) - sum);
  }
  return q / kScale;
}

}  // namespace mvai
