#pragma once

#include <vector>

#include "mvai/body_model.hpp"
#include "mvai/cuboid.hpp"

namespace mvai {

// World-space rigid transform per bone: a point bound to bone c moves to
// rotations[c] * p + translations[c]. Entry 0 (the root, which has no bone)
// is the pure root offset.
struct BoneTransforms {
  std::vector<Eigen::Matrix3d> rotations;
  std::vector<Eigen::Vector3d> translations;
};

// Pose directions with identity bone lengths, rooted at the identity root.
// A zero-length pose bone reuses its parent's aligned direction (or, below
// the root, the identity's own direction).
Skeleton align_skeleton(const Skeleton& pose, const Skeleton& identity);

// Minimal per-bone rotations composed parent to child in pre-order.
BoneTransforms bone_transforms(const Skeleton& rest, const Skeleton& aligned);

// Inverse-distance weights to the k_nearest closest bone segments (N x k,
// column c is the bone ending at joint c).
Eigen::MatrixXd bind_weights(const Points& identity_vertices, const Skeleton& rest,
                             double power = 2.0, int k_nearest = 2);

// Linear blend skinning; rows of `weights` are expected to sum to one.
Points deform(const Points& identity_vertices, const Eigen::MatrixXd& weights,
              const BoneTransforms& transforms);

// Per frame: regress the pose skeleton, align, transform and skin the
// identity. The identity skeleton is regressed from the identity mesh, which
// must then share the model's vertex count.
MeshCuboid sapd_imitate(const MeshCuboid& source, const Mesh& identity, const BodyModel& model,
                        double power = 2.0, int k_nearest = 2);
// Variant for identity meshes with their own topology (e.g. clothed).
MeshCuboid sapd_imitate(const MeshCuboid& source, const Mesh& identity,
                        const Skeleton& identity_skeleton, const BodyModel& model,
                        double power = 2.0, int k_nearest = 2);

}  // namespace mvai
