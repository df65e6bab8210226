#include "mvai/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mvai {

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
  const double theta = axis_angle.norm();
  if (theta < 1e-12) {
    // First-order expansion; exact identity at zero.
    Eigen::Matrix3d k;
    k << 0, -axis_angle.z(), axis_angle.y(), axis_angle.z(), 0, -axis_angle.x(),
        -axis_angle.y(), axis_angle.x(), 0;
    return Eigen::Matrix3d::Identity() + k;
  }
  const Eigen::Vector3d axis = axis_angle / theta;
  Eigen::Matrix3d k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

Eigen::Matrix3d minimal_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Eigen::Vector3d a = from.normalized();
  const Eigen::Vector3d b = to.normalized();
  const double c = std::clamp(a.dot(b), -1.0, 1.0);
  const Eigen::Vector3d cross = a.cross(b);
  const double s = cross.norm();
  if (s < 1e-12) {
    if (c > 0) return Eigen::Matrix3d::Identity();
    Eigen::Vector3d axis = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) {
      Eigen::Vector3d e = Eigen::Vector3d::Unit(i);
      if (std::abs(e.dot(a)) < 1.0 - 1e-9) {
        axis = (e - e.dot(a) * a).normalized();
        break;
      }
    }
    return rodrigues(M_PI * axis);
  }
  return rodrigues(std::atan2(s, c) * cross / s);
}

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

std::vector<int> preorder(std::span<const int> parents) {
  const int k = static_cast<int>(parents.size());
  if (k == 0) throw std::invalid_argument("skeleton has no joints");
  if (parents[0] != kNoParent) throw std::invalid_argument("joint 0 must be the root");
  std::vector<std::vector<int>> children(k);
  for (int j = 1; j < k; ++j) {
    if (parents[j] < 0 || parents[j] >= k || parents[j] == j) {
      throw std::invalid_argument("joint " + std::to_string(j) + " has invalid parent " +
                                  std::to_string(parents[j]));
    }
    children[parents[j]].push_back(j);
  }
  std::vector<int> order;
  order.reserve(k);
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    order.push_back(j);
    for (auto it = children[j].rbegin(); it != children[j].rend(); ++it) stack.push_back(*it);
  }
  if (static_cast<int>(order.size()) != k) {
    throw std::invalid_argument("parent array contains a cycle or disconnected joints");
  }
  return order;
}

Eigen::MatrixXd bone_segment_weights(const Points& vertices, const Points& joints,
                                     std::span<const int> parents, double power,
                                     int k_nearest) {
  const Eigen::Index n = vertices.rows();
  const int k = static_cast<int>(joints.rows());
  if (static_cast<int>(parents.size()) != k) {
    throw std::invalid_argument("parents/joints size mismatch");
  }
  if (k < 2) throw std::invalid_argument("binding weights need at least one bone");
  if (k_nearest < 1) throw std::invalid_argument("k_nearest must be >= 1");
  preorder(parents);

  constexpr double kFloor = 1e-8;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, k);
  std::vector<std::pair<double, int>> dist(k - 1);
  const int take = std::min(k_nearest, k - 1);
  for (Eigen::Index v = 0; v < n; ++v) {
    const Eigen::Vector3d p = vertices.row(v).transpose();
    for (int c = 1; c < k; ++c) {
      dist[c - 1] = {point_segment_distance(p, joints.row(parents[c]).transpose(),
                                            joints.row(c).transpose()),
                     c};
    }
    std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
    double total = 0.0;
    for (int i = 0; i < take; ++i) {
      const double wi = 1.0 / std::pow(std::max(dist[i].first, kFloor), power);
      w(v, dist[i].second) += wi;
      total += wi;
    }
    w.row(v) /= total;
  }
  return w;
}

Eigen::VectorXd distance_to_skeleton(const Points& vertices, const Points& joints,
                                     std::span<const int> parents) {
  Eigen::VectorXd d(vertices.rows());
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 1; c < parents.size(); ++c) {
      best = std::min(best, point_segment_distance(vertices.row(v).transpose(),
                                                   joints.row(parents[c]).transpose(),
                                                   joints.row(c).transpose()));
    }
    d[v] = best;
  }
  return d;
}

std::vector<std::pair<int, int>> mesh_edges(const Faces& faces) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(faces.rows() * 3);
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int e = 0; e < 3; ++e) {
      int a = faces(f, e), b = faces(f, (e + 1) % 3);
      if (a > b) std::swap(a, b);
      edges.emplace_back(a, b);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace mvai
