#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <vector>

namespace mvai {

// N×3 vertex (or joint) coordinates in meters, one row per point.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Mesh {
  Points vertices;
  Faces faces;

  Eigen::Index num_vertices() const { return vertices.rows(); }
};

inline constexpr int kNoParent = -1;

// Rotation matrix from an axis-angle vector (Rodrigues' formula).
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle);

// Smallest rotation taking unit vector `from` onto unit vector `to`.
// Antiparallel inputs rotate by pi about the lowest-index coordinate axis
// not parallel to `from`, projected orthogonal to it.
Eigen::Matrix3d minimal_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to);

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b);

// Pre-order (parents before children) traversal of a joint tree rooted at 0.
// Throws std::invalid_argument unless `parents` is a single tree rooted at 0.
std::vector<int> preorder(std::span<const int> parents);

// Inverse-distance binding weights to bone segments. Bone `c` runs from
// joints[parents[c]] to joints[c]; column c of the result holds its weight
// (column 0, the root, has no bone and stays zero). For each vertex the
// `k_nearest` closest bones get weight 1/max(d, 1e-8)^power, then the row is
// normalized to sum to one.
Eigen::MatrixXd bone_segment_weights(const Points& vertices, const Points& joints,
                                     std::span<const int> parents, double power = 2.0,
                                     int k_nearest = 2);

// Minimum distance from each vertex to any bone segment of the skeleton.
Eigen::VectorXd distance_to_skeleton(const Points& vertices, const Points& joints,
                                     std::span<const int> parents);

// Unique undirected edges of a triangle mesh, sorted.
std::vector<std::pair<int, int>> mesh_edges(const Faces& faces);

}  // namespace mvai
