#include <array>
#include <cmath>

#include "mvai/body_model.hpp"

namespace mvai {

namespace {

// SMPL joint tree: pelvis, hips, spine, knees, ..., hands.
const std::array<int, 24> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                      9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

// Rest joint locations (meters; y up, x toward the body's left, z forward), T-pose.
const std::array<Eigen::Vector3d, 24> kRestJoints = {
    Eigen::Vector3d(0.00, 0.95, 0.00),  Eigen::Vector3d(0.09, 0.88, 0.00),
    Eigen::Vector3d(-0.09, 0.88, 0.00), Eigen::Vector3d(0.00, 1.05, 0.00),
    Eigen::Vector3d(0.10, 0.50, 0.00),  Eigen::Vector3d(-0.10, 0.50, 0.00),
    Eigen::Vector3d(0.00, 1.18, 0.00),  Eigen::Vector3d(0.10, 0.09, 0.00),
    Eigen::Vector3d(-0.10, 0.09, 0.00), Eigen::Vector3d(0.00, 1.32, 0.00),
    Eigen::Vector3d(0.10, 0.03, 0.13),  Eigen::Vector3d(-0.10, 0.03, 0.13),
    Eigen::Vector3d(0.00, 1.50, 0.00),  Eigen::Vector3d(0.07, 1.44, 0.00),
    Eigen::Vector3d(-0.07, 1.44, 0.00), Eigen::Vector3d(0.00, 1.62, 0.00),
    Eigen::Vector3d(0.18, 1.44, 0.00),  Eigen::Vector3d(-0.18, 1.44, 0.00),
    Eigen::Vector3d(0.45, 1.44, 0.00),  Eigen::Vector3d(-0.45, 1.44, 0.00),
    Eigen::Vector3d(0.70, 1.44, 0.00),  Eigen::Vector3d(-0.70, 1.44, 0.00),
    Eigen::Vector3d(0.80, 1.44, 0.00),  Eigen::Vector3d(-0.80, 1.44, 0.00)};

struct Tube {
  int from, to;
  int rings;
  double r0, r1;
  BodyPart part;
};

const std::array<Tube, 18> kTubes = {{
    {1, 4, 5, 0.080, 0.055, BodyPart::kLeftLeg},   {2, 5, 5, 0.080, 0.055, BodyPart::kRightLeg},
    {4, 7, 5, 0.055, 0.040, BodyPart::kLeftLeg},   {5, 8, 5, 0.055, 0.040, BodyPart::kRightLeg},
    {7, 10, 3, 0.040, 0.030, BodyPart::kLeftLeg},  {8, 11, 3, 0.040, 0.030, BodyPart::kRightLeg},
    {2, 1, 3, 0.110, 0.110, BodyPart::kTorso},     {0, 3, 3, 0.130, 0.130, BodyPart::kTorso},
    {3, 6, 3, 0.140, 0.140, BodyPart::kTorso},     {6, 9, 3, 0.150, 0.140, BodyPart::kTorso},
    {9, 12, 2, 0.060, 0.050, BodyPart::kTorso},    {12, 15, 2, 0.050, 0.050, BodyPart::kTorso},
    {13, 16, 2, 0.060, 0.055, BodyPart::kLeftArm}, {14, 17, 2, 0.060, 0.055, BodyPart::kRightArm},
    {16, 18, 4, 0.055, 0.045, BodyPart::kLeftArm}, {17, 19, 4, 0.055, 0.045, BodyPart::kRightArm},
    {18, 20, 4, 0.045, 0.035, BodyPart::kLeftArm}, {19, 21, 4, 0.045, 0.035, BodyPart::kRightArm},
}};
// Hands are generated after the arm tubes so their rings stay grouped with the arm.
const std::array<Tube, 2> kHands = {{{20, 22, 2, 0.035, 0.030, BodyPart::kLeftArm},
                                     {21, 23, 2, 0.035, 0.030, BodyPart::kRightArm}}};

const Eigen::Vector3d kHeadCenter(0.0, 1.72, 0.0);
constexpr double kHeadRadius = 0.11;
constexpr int kHeadRings = 9;

struct Generated {
  Points vertices;
  Faces faces;
  std::vector<BodyPart> parts;
  std::vector<Eigen::Vector3d> axis_points;  // nearest point on the generating axis
};

void ring_frame(const Eigen::Vector3d& dir, Eigen::Vector3d& u, Eigen::Vector3d& w) {
  Eigen::Index least;
  dir.cwiseAbs().minCoeff(&least);
  u = dir.cross(Eigen::Vector3d::Unit(least)).normalized();
  w = dir.cross(u).normalized();
}

Generated generate(int sides) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<int, 3>> faces;
  Generated g;

  auto connect_rings = [&](int first_ring_start, int rings) {
    for (int r = 0; r + 1 < rings; ++r) {
      const int a0 = first_ring_start + r * sides;
      const int b0 = a0 + sides;
      for (int s = 0; s < sides; ++s) {
        const int s1 = (s + 1) % sides;
        faces.push_back({a0 + s, b0 + s, b0 + s1});
        faces.push_back({a0 + s, b0 + s1, a0 + s1});
      }
    }
  };

  auto add_tube = [&](const Tube& t) {
    const Eigen::Vector3d a = kRestJoints[t.from], b = kRestJoints[t.to];
    const Eigen::Vector3d dir = (b - a).normalized();
    Eigen::Vector3d u, w;
    ring_frame(dir, u, w);
    const int start = static_cast<int>(verts.size());
    for (int r = 0; r < t.rings; ++r) {
      const double f = static_cast<double>(r) / (t.rings - 1);
      const Eigen::Vector3d c = a + f * (b - a);
      const double radius = t.r0 + f * (t.r1 - t.r0);
      for (int s = 0; s < sides; ++s) {
        const double phi = 2.0 * M_PI * s / sides;
        verts.push_back(c + radius * (std::cos(phi) * u + std::sin(phi) * w));
        g.parts.push_back(t.part);
        g.axis_points.push_back(c);
      }
    }
    connect_rings(start, t.rings);
  };

  for (const auto& t : kTubes) add_tube(t);
  for (const auto& t : kHands) add_tube(t);

  // Head: latitude rings between two poles.
  const int bottom = static_cast<int>(verts.size());
  verts.push_back(kHeadCenter - kHeadRadius * Eigen::Vector3d::UnitY());
  g.parts.push_back(BodyPart::kHead);
  g.axis_points.push_back(kHeadCenter);
  const int first = static_cast<int>(verts.size());
  for (int r = 0; r < kHeadRings; ++r) {
    const double lat = -M_PI / 2 + M_PI * (r + 1) / (kHeadRings + 1);
    for (int s = 0; s < sides; ++s) {
      const double phi = 2.0 * M_PI * s / sides;
      verts.push_back(kHeadCenter + kHeadRadius * Eigen::Vector3d(std::cos(lat) * std::cos(phi),
                                                                  std::sin(lat),
                                                                  std::cos(lat) * std::sin(phi)));
      g.parts.push_back(BodyPart::kHead);
      g.axis_points.push_back(kHeadCenter);
    }
  }
  connect_rings(first, kHeadRings);
  const int top = static_cast<int>(verts.size());
  verts.push_back(kHeadCenter + kHeadRadius * Eigen::Vector3d::UnitY());
  g.parts.push_back(BodyPart::kHead);
  g.axis_points.push_back(kHeadCenter);
  const int last = first + (kHeadRings - 1) * sides;
  for (int s = 0; s < sides; ++s) {
    const int s1 = (s + 1) % sides;
    faces.push_back({bottom, first + s1, first + s});
    faces.push_back({top, last + s, last + s1});
  }

  g.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) g.vertices.row(i) = verts[i].transpose();
  g.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    g.faces.row(i) << faces[i][0], faces[i][1], faces[i][2];
  return g;
}

Points round_to_float(Points p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(p.data()[i]);
  return p;
}

}  // namespace

std::vector<BodyPart> humanoid_parts(const HumanoidOptions& options) {
  return generate(options.ring_sides).parts;
}

BodyModel make_humanoid(const HumanoidOptions& options) {
  if (options.ring_sides < 3) throw std::invalid_argument("ring_sides must be >= 3");
  const Generated g = generate(options.ring_sides);
  const Eigen::Index n = g.vertices.rows();
  const int k = static_cast<int>(kParents.size());

  Points joints(k, 3);
  for (int j = 0; j < k; ++j) joints.row(j) = kRestJoints[j].transpose();
  const std::vector<int> parents(kParents.begin(), kParents.end());

  // Shape basis: height, girth, torso scale, limb length.
  std::vector<Points> basis(4, Points::Zero(n, 3));
  const Eigen::Vector3d torso_center(0.0, 1.2, 0.0);
  for (Eigen::Index v = 0; v < n; ++v) {
    const Eigen::Vector3d p = g.vertices.row(v).transpose();
    basis[0].row(v) = Eigen::RowVector3d(0.0, 0.05 * p.y(), 0.0);
    basis[1].row(v) = 0.2 * (p - g.axis_points[v]).transpose();
    Eigen::Vector3d anchor;
    switch (g.parts[v]) {
      case BodyPart::kTorso:
      case BodyPart::kHead: anchor = p; break;
      case BodyPart::kLeftArm: anchor = kRestJoints[16]; break;
      case BodyPart::kRightArm: anchor = kRestJoints[17]; break;
      case BodyPart::kLeftLeg: anchor = kRestJoints[1]; break;
      case BodyPart::kRightLeg: anchor = kRestJoints[2]; break;
    }
    basis[2].row(v) = 0.08 * (anchor - torso_center).transpose();
    switch (g.parts[v]) {
      case BodyPart::kLeftArm:
      case BodyPart::kRightArm:
        basis[3].row(v) = Eigen::RowVector3d(0.08 * (p.x() - anchor.x()), 0.0, 0.0);
        break;
      case BodyPart::kLeftLeg:
      case BodyPart::kRightLeg:
        basis[3].row(v) = Eigen::RowVector3d(0.0, 0.08 * (p.y() - anchor.y()), 0.0);
        break;
      default: break;
    }
  }
  for (auto& b : basis) b = round_to_float(b);

  // Regressor: inverse-distance weights over the ring(s) whose center is
  // closest to each joint. Selecting by ring center rather than by vertex
  // keeps a wide neighbouring tube (the hips under the pelvis) from winning.
  Eigen::MatrixXd regressor = Eigen::MatrixXd::Zero(k, n);
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd axis(n);
    for (Eigen::Index v = 0; v < n; ++v) axis[v] = (g.axis_points[v] - kRestJoints[j]).norm();
    const double nearest = axis.minCoeff();
    for (Eigen::Index v = 0; v < n; ++v) {
      if (axis[v] > nearest + 1e-9) continue;
      const double d = (g.vertices.row(v) - joints.row(j)).norm();
      regressor(j, v) = 1.0 / std::max(d * d, 1e-12);
    }
  }

  // Skinning: bone-segment weights, bone c -> driving joint parents[c].
  const Eigen::MatrixXd bone_w = bone_segment_weights(g.vertices, joints, parents, 2.0, 2);
  Eigen::MatrixXd skinning = Eigen::MatrixXd::Zero(n, k);
  for (int c = 1; c < k; ++c) skinning.col(parents[c]) += bone_w.col(c);

  return BodyModel(round_to_float(g.vertices), g.faces, std::move(basis),
                   quantize_row_stochastic(skinning), quantize_row_stochastic(regressor),
                   parents);
}

}  // namespace mvai
