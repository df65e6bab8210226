#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mvai/geometry.hpp"

namespace mvai {

struct ShapeParams {
  Eigen::VectorXd coeffs;
};

// Per-joint local axis-angle rotations (k×3, radians) plus root translation.
struct PoseParams {
  Points rotations;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseParams zero(int num_joints);
};

struct Skeleton {
  Points joints;
  std::vector<int> parents;

  int num_joints() const { return static_cast<int>(joints.rows()); }
  // Entry 0 (root) is zero; entry c is |joints[c] - joints[parents[c]]|.
  Eigen::VectorXd bone_lengths() const;
};

// Linear-blend-skinned parametric body: template mesh, linear shape space,
// per-vertex skinning weights and a vertex-to-joint regressor. Immutable
// once constructed; the constructor validates every invariant and throws
// std::invalid_argument on violation.
class BodyModel {
 public:
  BodyModel(Points template_vertices, Faces faces, std::vector<Points> shape_basis,
            Eigen::MatrixXd skinning_weights, Eigen::MatrixXd joint_regressor,
            std::vector<int> parents);

  int num_vertices() const { return static_cast<int>(template_.rows()); }
  int num_joints() const { return static_cast<int>(parents_.size()); }
  int num_shape_coeffs() const { return static_cast<int>(basis_.size()); }

  const Points& template_vertices() const { return template_; }
  const Faces& faces() const { return faces_; }
  const std::vector<Points>& shape_basis() const { return basis_; }
  const Eigen::MatrixXd& skinning_weights() const { return skinning_; }
  const Eigen::MatrixXd& joint_regressor() const { return regressor_; }
  const std::vector<int>& parents() const { return parents_; }
  const std::vector<int>& joint_order() const { return order_; }

 private:
  Points template_;
  Faces faces_;
  std::vector<Points> basis_;
  Eigen::MatrixXd skinning_;
  Eigen::MatrixXd regressor_;
  std::vector<int> parents_;
  std::vector<int> order_;
};

// World-space joint frames produced by forward kinematics.
struct JointFrames {
  std::vector<Eigen::Matrix3d> rotations;  // world rotation of each joint
  Points rest_joints;                      // joint locations in the rest mesh
  Points posed_joints;                     // joint locations after posing (no root translation)
};

Mesh shape_mesh(const BodyModel& model, const ShapeParams& shape);

Points regress_joints(const BodyModel& model, const Points& vertices);

// `bone_scales` (empty, or one factor per joint) stretches the rest offset
// from each joint's parent; it is how per-clip limb-length noise is applied.
JointFrames forward_kinematics(const BodyModel& model, const Points& rest_joints,
                               const PoseParams& pose, std::span<const double> bone_scales = {});

Mesh pose_mesh(const BodyModel& model, const ShapeParams& shape, const PoseParams& pose,
               std::span<const double> bone_scales = {});

// Applies LBS with `weights` (N×k) to arbitrary vertices given joint frames.
Points skin_points(const Points& rest_vertices, const Eigen::MatrixXd& weights,
                   const JointFrames& frames, const Eigen::Vector3d& translation);

Skeleton skeleton_of(const BodyModel& model, const Points& vertices);

// "MBDY" binary format.
void save_body_model(const std::filesystem::path& path, const BodyModel& model);
BodyModel load_body_model(const std::filesystem::path& path);

// Procedural capsule humanoid with an SMPL-like 24-joint tree and four shape
// coefficients (height, girth, torso scale, limb length). With the default
// 8 vertices per ring it has 602 vertices.
struct HumanoidOptions {
  int ring_sides = 8;
};
BodyModel make_humanoid(const HumanoidOptions& options = {});

// Body part each humanoid template vertex was generated for, in generation
// order. Used by the clothed-mesh generator.
enum class BodyPart { kTorso, kHead, kLeftArm, kRightArm, kLeftLeg, kRightLeg };
std::vector<BodyPart> humanoid_parts(const HumanoidOptions& options = {});

// Rounds every entry to float32 and then to a multiple of 2^-24, fixing the
// largest entry of each row so the row sums to exactly one. Such weights
// survive float32 serialization without changing their row sums.
Eigen::MatrixXd quantize_row_stochastic(const Eigen::MatrixXd& weights);

}  // namespace mvai
