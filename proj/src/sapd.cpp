#include "mvai/sapd.hpp"

#include <stdexcept>

namespace mvai {

namespace {

constexpr double kDegenerate = 1e-12;

void same_topology(const Skeleton& a, const Skeleton& b) {
  if (a.parents != b.parents || a.joints.rows() != b.joints.rows()) {
    throw std::invalid_argument("skeletons have different topology");
  }
}

}  // namespace

Skeleton align_skeleton(const Skeleton& pose, const Skeleton& identity) {
  same_topology(pose, identity);
  const int k = identity.num_joints();
  const std::vector<int> order = preorder(identity.parents);
  const Eigen::VectorXd lengths = identity.bone_lengths();
  Skeleton out{Points(k, 3), identity.parents};
  std::vector<Eigen::Vector3d> dirs(k, Eigen::Vector3d::Zero());
  out.joints.row(0) = identity.joints.row(0);
  for (int c : order) {
    if (c == 0) continue;
    const int p = identity.parents[c];
    Eigen::Vector3d d = (pose.joints.row(c) - pose.joints.row(p)).transpose();
    if (d.norm() > kDegenerate) {
      d.normalize();
    } else if (p != 0) {
      d = dirs[p];
    } else {
      d = (identity.joints.row(c) - identity.joints.row(p)).transpose().normalized();
    }
    dirs[c] = d;
    out.joints.row(c) = out.joints.row(p) + lengths[c] * d.transpose();
  }
  return out;
}

BoneTransforms bone_transforms(const Skeleton& rest, const Skeleton& aligned) {
  same_topology(rest, aligned);
  const int k = rest.num_joints();
  BoneTransforms tr{std::vector<Eigen::Matrix3d>(k, Eigen::Matrix3d::Identity()),
                    std::vector<Eigen::Vector3d>(k, Eigen::Vector3d::Zero())};
  tr.translations[0] = (aligned.joints.row(0) - rest.joints.row(0)).transpose();
  for (int c : preorder(rest.parents)) {
    if (c == 0) continue;
    const int p = rest.parents[c];
    const Eigen::Vector3d rest_vec = (rest.joints.row(c) - rest.joints.row(p)).transpose();
    const Eigen::Vector3d aligned_vec = (aligned.joints.row(c) - aligned.joints.row(p)).transpose();
    if (rest_vec.norm() <= kDegenerate || aligned_vec.norm() <= kDegenerate) {
      throw std::invalid_argument("bone " + std::to_string(c) + " has zero length");
    }
    const Eigen::Matrix3d& rp = tr.rotations[p];
    const Eigen::Matrix3d local = minimal_rotation((rp * rest_vec).normalized(), aligned_vec.normalized());
    tr.rotations[c] = local * rp;
    tr.translations[c] = aligned.joints.row(p).transpose() - tr.rotations[c] * rest.joints.row(p).transpose();
  }
  return tr;
}

Eigen::MatrixXd bind_weights(const Points& identity_vertices, const Skeleton& rest, double power,
                             int k_nearest) {
  return bone_segment_weights(identity_vertices, rest.joints, rest.parents, power, k_nearest);
}

Points deform(const Points& identity_vertices, const Eigen::MatrixXd& weights,
              const BoneTransforms& transforms) {
  const Eigen::Index n = identity_vertices.rows();
  const std::size_t k = transforms.rotations.size();
  if (weights.rows() != n || static_cast<std::size_t>(weights.cols()) != k ||
      transforms.translations.size() != k) {
    throw std::invalid_argument("deform: weights/transforms do not match the mesh");
  }
  Points out = Points::Zero(n, 3);
  for (Eigen::Index v = 0; v < n; ++v) {
    const Eigen::Vector3d x = identity_vertices.row(v).transpose();
    // Blend displacements rather than positions: identical for unit weight
    // sums, and identity transforms then leave the vertex exactly in place
    // whatever the rounding of the weights.
    Eigen::Vector3d shift = Eigen::Vector3d::Zero();
    for (std::size_t j = 0; j < k; ++j) {
      const double w = weights(v, j);
      if (w == 0.0) continue;
      shift += w * (transforms.rotations[j] * x - x + transforms.translations[j]);
    }
    out.row(v) = (x + shift).transpose();
  }
  return out;
}

MeshCuboid sapd_imitate(const MeshCuboid& source, const Mesh& identity,
                        const Skeleton& identity_skeleton, const BodyModel& model, double power,
                        int k_nearest) {
  if (source.points() != model.num_vertices()) {
    throw std::invalid_argument("source cuboid does not match the body model's vertex count");
  }
  const Eigen::MatrixXd weights = bind_weights(identity.vertices, identity_skeleton, power, k_nearest);
  std::vector<Points> frames;
  for (int t = 0; t < source.frames(); ++t) {
    const Skeleton pose = skeleton_of(model, source.frame(t));
    const Skeleton aligned = align_skeleton(pose, identity_skeleton);
    frames.push_back(deform(identity.vertices, weights, bone_transforms(identity_skeleton, aligned)));
  }
  return make_cuboid(std::span<const Points>(frames));
}

MeshCuboid sapd_imitate(const MeshCuboid& source, const Mesh& identity, const BodyModel& model,
                        double power, int k_nearest) {
  return sapd_imitate(source, identity, skeleton_of(model, identity.vertices), model, power, k_nearest);
}

}  // namespace mvai
