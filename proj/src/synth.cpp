#include "mvai/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "mvai/metrics.hpp"

namespace mvai {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxAngle = std::numbers::pi - 1e-3;

// Per-joint amplitude factor: root, spine, wrists, hands and feet move less.
double joint_mobility(int j) {
  switch (j) {
    case 0: case 3: case 6: case 9: return 0.3;
    case 10: case 11: case 20: case 21: case 22: case 23: return 0.3;
    case 12: case 15: return 0.5;
    default: return 1.0;
  }
}

Eigen::Vector3d closest_on_segment(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                   const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return a + t * ab;
}

Eigen::Vector3d outward(const Eigen::Vector3d& p, const Skeleton& s) {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitY();
  for (int c = 1; c < s.num_joints(); ++c) {
    const Eigen::Vector3d q = closest_on_segment(p, s.joints.row(s.parents[c]).transpose(),
                                                 s.joints.row(c).transpose());
    const double d = (p - q).norm();
    if (d < best && d > 1e-9) {
      best = d;
      dir = (p - q) / d;
    }
  }
  return dir;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined state
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void MotionSpec::validate(int num_joints) const {
  if (base.rows() != num_joints) throw std::invalid_argument("motion base pose has the wrong joint count");
  if (duration_frames < 1 || !(frame_rate > 0.0)) {
    throw std::invalid_argument("motion duration and frame rate must be positive");
  }
  Points bound = base.cwiseAbs();
  for (const Wave& w : waves) {
    if (w.joint < 0 || w.joint >= num_joints || w.axis < 0 || w.axis > 2) {
      throw std::invalid_argument("wave references a missing joint/axis");
    }
    if (!(w.frequency > 0.0)) throw std::invalid_argument("wave frequency must be positive");
    bound(w.joint, w.axis) += std::abs(w.amplitude);
  }
  for (int j = 0; j < num_joints; ++j) {
    if (!(bound.row(j).norm() < std::numbers::pi)) {
      throw std::invalid_argument("joint " + std::to_string(j) +
                                  " can reach an axis-angle norm of pi");
    }
  }
}

void to_json(nlohmann::json& j, const MotionOptions& o) {
  j = {{"base_std", o.base_std},           {"amplitude_max", o.amplitude_max},
       {"freq_min", o.freq_min},           {"freq_max", o.freq_max},
       {"waves_per_joint", o.waves_per_joint}, {"root_speed_max", o.root_speed_max},
       {"bob_amplitude", o.bob_amplitude}, {"duration_frames", o.duration_frames},
       {"frame_rate", o.frame_rate}};
}

void from_json(const nlohmann::json& j, MotionOptions& o) {
  MotionOptions d;
  o.base_std = j.value("base_std", d.base_std);
  o.amplitude_max = j.value("amplitude_max", d.amplitude_max);
  o.freq_min = j.value("freq_min", d.freq_min);
  o.freq_max = j.value("freq_max", d.freq_max);
  o.waves_per_joint = j.value("waves_per_joint", d.waves_per_joint);
  o.root_speed_max = j.value("root_speed_max", d.root_speed_max);
  o.bob_amplitude = j.value("bob_amplitude", d.bob_amplitude);
  o.duration_frames = j.value("duration_frames", d.duration_frames);
  o.frame_rate = j.value("frame_rate", d.frame_rate);
}

MotionSpec random_motion(int num_joints, std::uint64_t seed, const MotionOptions& o) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MotionSpec m;
  m.seed = seed;
  m.duration_frames = o.duration_frames;
  m.frame_rate = o.frame_rate;
  m.base = Points::Zero(num_joints, 3);
  for (int j = 0; j < num_joints; ++j) {
    const double f = joint_mobility(j);
    for (int a = 0; a < 3; ++a) m.base(j, a) = std::clamp(o.base_std * f * normal(rng), -0.5, 0.5);
    for (int w = 0; w < o.waves_per_joint; ++w) {
      Wave wave;
      wave.joint = j;
      wave.axis = static_cast<int>(unit(rng) * 3.0) % 3;
      wave.amplitude = o.amplitude_max * f * unit(rng);
      wave.frequency = o.freq_min + (o.freq_max - o.freq_min) * unit(rng);
      wave.phase = kTwoPi * unit(rng);
      m.waves.push_back(wave);
    }
  }
  const double heading = kTwoPi * unit(rng);
  const double speed = o.root_speed_max * unit(rng);
  m.root_velocity = Eigen::Vector3d(std::cos(heading) * speed, 0.0, std::sin(heading) * speed);
  m.bob_amplitude = o.bob_amplitude;
  m.bob_frequency = 0.5 + unit(rng);
  m.validate(num_joints);
  return m;
}

PoseParams motion_pose(const MotionSpec& motion, double frame) {
  const double s = frame / motion.frame_rate;
  PoseParams p;
  p.rotations = motion.base;
  for (const Wave& w : motion.waves) {
    p.rotations(w.joint, w.axis) += w.amplitude * std::sin(kTwoPi * w.frequency * s + w.phase);
  }
  p.translation = motion.root_velocity * s;
  p.translation.y() += motion.bob_amplitude * std::sin(kTwoPi * motion.bob_frequency * s);
  return p;
}

ShapeParams random_shape(int num_coeffs, std::uint64_t seed, double spread) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  ShapeParams s{Eigen::VectorXd(num_coeffs)};
  for (int i = 0; i < num_coeffs; ++i) s.coeffs[i] = u(rng);
  return s;
}

GeneratedClip gen_clip(const BodyModel& model, const MotionSpec& motion, const ShapeParams& shape,
                       std::span<const int> frames) {
  motion.validate(model.num_joints());
  if (frames.empty()) throw std::invalid_argument("clip needs at least one frame");
  GeneratedClip clip{MeshCuboid::zeros(1, 1), JointSeq::zeros(1, 1), {}, shape,
                     std::vector<int>(frames.begin(), frames.end())};
  std::vector<Points> meshes;
  for (int f : frames) {
    clip.poses.push_back(motion_pose(motion, f));
    meshes.push_back(pose_mesh(model, shape, clip.poses.back()).vertices);
  }
  clip.cuboid = make_cuboid(std::span<const Points>(meshes));
  std::vector<Points> joints;
  for (int t = 0; t < clip.cuboid.frames(); ++t) {
    joints.push_back(regress_joints(model, clip.cuboid.frame(t)));
  }
  clip.joints = JointSeq::from_frames(joints);
  return clip;
}

GeneratedClip gen_clip(const BodyModel& model, const MotionSpec& motion, const ShapeParams& shape,
                       int clip_length, int stride) {
  if (clip_length < 1 || stride < 1) throw std::invalid_argument("clip length and stride must be positive");
  std::vector<int> frames(clip_length);
  for (int i = 0; i < clip_length; ++i) frames[i] = i * stride;
  return gen_clip(model, motion, shape, frames);
}

void NoiseSpec::validate() const {
  if (!(jitter_std >= 0.0 && drift_std >= 0.0 && outlier_magnitude >= 0.0 && limb_jitter_std >= 0.0)) {
    throw std::invalid_argument("noise standard deviations must be non-negative");
  }
  if (!(outlier_prob >= 0.0 && outlier_prob <= 1.0)) {
    throw std::invalid_argument("outlier probability must lie in [0, 1]");
  }
  if (!(drift_coeff >= 0.0 && drift_coeff < 1.0)) {
    throw std::invalid_argument("drift coefficient must lie in [0, 1)");
  }
}

NoiseSpec NoiseSpec::benchmark_default() {
  NoiseSpec n;
  n.jitter_std = 0.08;
  n.drift_coeff = 0.8;
  n.drift_std = 0.02;
  n.outlier_prob = 0.1;
  n.outlier_magnitude = 0.35;
  n.limb_jitter_std = 0.03;
  return n;
}

void to_json(nlohmann::json& j, const NoiseSpec& n) {
  j = {{"jitter_std", n.jitter_std},         {"drift_coeff", n.drift_coeff},
       {"drift_std", n.drift_std},           {"outlier_prob", n.outlier_prob},
       {"outlier_magnitude", n.outlier_magnitude}, {"limb_jitter_std", n.limb_jitter_std},
       {"seed", n.seed}};
}

void from_json(const nlohmann::json& j, NoiseSpec& n) {
  NoiseSpec d;
  n.jitter_std = j.value("jitter_std", d.jitter_std);
  n.drift_coeff = j.value("drift_coeff", d.drift_coeff);
  n.drift_std = j.value("drift_std", d.drift_std);
  n.outlier_prob = j.value("outlier_prob", d.outlier_prob);
  n.outlier_magnitude = j.value("outlier_magnitude", d.outlier_magnitude);
  n.limb_jitter_std = j.value("limb_jitter_std", d.limb_jitter_std);
  n.seed = j.value("seed", d.seed);
}

MeshCuboid corrupt(const GeneratedClip& clip, const BodyModel& model, const NoiseSpec& noise) {
  noise.validate();
  const int k = model.num_joints();
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> scales(k, 1.0);
  for (int j = 1; j < k; ++j) {
    scales[j] = std::clamp(1.0 + noise.limb_jitter_std * normal(rng), 0.5, 1.5);
  }
  Points drift = Points::Zero(k, 3);
  std::vector<Points> meshes;
  for (const PoseParams& gt : clip.poses) {
    PoseParams p = gt;
    for (int j = 0; j < k; ++j)
      for (int a = 0; a < 3; ++a) {
        drift(j, a) = noise.drift_coeff * drift(j, a) + noise.drift_std * normal(rng);
        p.rotations(j, a) += noise.jitter_std * normal(rng) + drift(j, a);
      }
    if (unit(rng) < noise.outlier_prob) {
      for (int j = 0; j < k; ++j) {
        Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
        if (dir.norm() < 1e-12) dir = Eigen::Vector3d::UnitX();
        p.rotations.row(j) += noise.outlier_magnitude * dir.normalized().transpose();
      }
    }
    for (int j = 0; j < k; ++j) {
      const double n = p.rotations.row(j).norm();
      if (n > kMaxAngle) p.rotations.row(j) *= kMaxAngle / n;
    }
    meshes.push_back(pose_mesh(model, clip.shape, p, scales).vertices);
  }
  return make_cuboid(std::span<const Points>(meshes));
}

ClothedIdentity make_clothed_identity(const BodyModel& model, const ShapeParams& shape,
                                      const ClothOptions& options) {
  const Mesh body = shape_mesh(model, shape);
  const Skeleton skel = skeleton_of(model, body.vertices);
  const std::vector<BodyPart> parts = humanoid_parts();
  if (static_cast<int>(parts.size()) != model.num_vertices()) {
    throw std::invalid_argument("clothed identities need the procedural humanoid model");
  }
  const auto thickness = [&](BodyPart p) {
    switch (p) {
      case BodyPart::kTorso: return options.torso;
      case BodyPart::kHead: return options.head;
      case BodyPart::kLeftArm:
      case BodyPart::kRightArm: return options.arms;
      case BodyPart::kLeftLeg:
      case BodyPart::kRightLeg: return options.legs;
    }
    return 0.0;
  };

  const auto edges = mesh_edges(body.faces);
  const int n = model.num_vertices();
  const int n2 = n + static_cast<int>(edges.size());
  std::map<std::pair<int, int>, int> midpoint;
  for (std::size_t e = 0; e < edges.size(); ++e) midpoint[edges[e]] = n + static_cast<int>(e);

  ClothedIdentity c;
  c.shape = shape;
  c.skeleton = skel;
  c.mesh.vertices.resize(n2, 3);
  c.weights = Eigen::MatrixXd::Zero(n2, model.num_joints());
  std::vector<double> thick(n2);
  for (int v = 0; v < n; ++v) {
    c.mesh.vertices.row(v) = body.vertices.row(v);
    c.weights.row(v) = model.skinning_weights().row(v);
    thick[v] = thickness(parts[v]);
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    const int v = n + static_cast<int>(e);
    c.mesh.vertices.row(v) = 0.5 * (body.vertices.row(a) + body.vertices.row(b));
    c.weights.row(v) = 0.5 * (model.skinning_weights().row(a) + model.skinning_weights().row(b));
    thick[v] = std::min(thickness(parts[a]), thickness(parts[b]));
  }
  for (int v = 0; v < n2; ++v) {
    const Eigen::Vector3d p = c.mesh.vertices.row(v).transpose();
    c.mesh.vertices.row(v) += thick[v] * outward(p, skel).transpose();
  }
  const auto mid = [&](int a, int b) { return midpoint.at({std::min(a, b), std::max(a, b)}); };
  c.mesh.faces.resize(4 * body.faces.rows(), 3);
  for (Eigen::Index f = 0; f < body.faces.rows(); ++f) {
    const int a = body.faces(f, 0), b = body.faces(f, 1), d = body.faces(f, 2);
    const int ab = mid(a, b), bd = mid(b, d), da = mid(d, a);
    c.mesh.faces.row(4 * f) << a, ab, da;
    c.mesh.faces.row(4 * f + 1) << ab, b, bd;
    c.mesh.faces.row(4 * f + 2) << da, bd, d;
    c.mesh.faces.row(4 * f + 3) << ab, bd, da;
  }
  return c;
}

Points pose_clothed(const BodyModel& model, const ClothedIdentity& clothed, const PoseParams& pose) {
  const JointFrames frames = forward_kinematics(model, clothed.skeleton.joints, pose);
  return skin_points(clothed.mesh.vertices, clothed.weights, frames, pose.translation);
}

std::vector<TransferPair> make_transfer_pairs(const BodyModel& model, int identities, int poses,
                                              std::uint64_t seed, const MotionOptions& motion) {
  if (identities < 2 || poses < 1) {
    throw std::invalid_argument("transfer pairs need at least two identities and one pose");
  }
  std::vector<ShapeParams> shapes;
  std::vector<Mesh> rest;
  for (int i = 0; i < identities; ++i) {
    shapes.push_back(random_shape(model.num_shape_coeffs(), derive_seed(seed, 1000 + i)));
    rest.push_back(shape_mesh(model, shapes.back()));
  }
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::vector<TransferPair> pairs;
  for (int p = 0; p < poses; ++p) {
    const MotionSpec m = random_motion(model.num_joints(), derive_seed(seed, 100000 + p), motion);
    std::uniform_int_distribution<int> frame(0, m.duration_frames - 1);
    PoseParams pose = motion_pose(m, frame(rng));
    pose.translation.setZero();
    for (int b = 0; b < identities; ++b) {
      std::uniform_int_distribution<int> other(1, identities - 1);
      const int a = (b + other(rng)) % identities;
      pairs.push_back({pose_mesh(model, shapes[a], pose).vertices, rest[b],
                       pose_mesh(model, shapes[b], pose).vertices});
    }
  }
  return pairs;
}

nlohmann::json make_benchmark(const std::filesystem::path& dir, const BenchmarkOptions& o) {
  if (o.train_clips < 1 || o.test_clips < 1 || o.train_subjects < 1 || o.test_subjects < 1 ||
      o.clips_per_train_video < 1) {
    throw std::invalid_argument("benchmark sizes must be positive");
  }
  o.noise.validate();
  std::filesystem::create_directories(dir / "clips");
  const BodyModel model = make_humanoid();
  save_body_model(dir / "model.mbdy", model);
  const int k = model.num_joints();

  std::set<std::uint64_t> used;
  const auto fresh = [&](std::uint64_t stream) {
    const std::uint64_t s = derive_seed(o.seed, stream);
    if (!used.insert(s).second) throw std::logic_error("seed collision while building benchmark");
    return s;
  };

  nlohmann::json manifest = {{"format", "mvai-benchmark"},
                             {"version", 1},
                             {"seed", o.seed},
                             {"model", "model.mbdy"},
                             {"num_vertices", model.num_vertices()},
                             {"num_joints", k},
                             {"root_joint", 0},
                             {"clip_length", o.clip_length},
                             {"stride", o.stride},
                             {"frame_rate", o.motion.frame_rate},
                             {"video_frames", o.motion.duration_frames},
                             {"noise", o.noise},
                             {"motion", o.motion}};

  double input_error_sum = 0.0;
  for (int split = 0; split < 2; ++split) {
    const bool train = split == 0;
    const std::string name = train ? "train" : "test";
    const int subjects = train ? o.train_subjects : o.test_subjects;
    std::vector<ShapeParams> shapes;
    nlohmann::json subj = nlohmann::json::array();
    for (int s = 0; s < subjects; ++s) {
      const std::uint64_t seed = fresh((train ? 1'000'000ULL : 2'000'000ULL) + s);
      shapes.push_back(random_shape(model.num_shape_coeffs(), seed));
      subj.push_back({{"id", name + "_subject_" + std::to_string(s)},
                      {"seed", seed},
                      {"shape", std::vector<double>(shapes.back().coeffs.data(),
                                                    shapes.back().coeffs.data() + shapes.back().coeffs.size())}});
    }
    manifest["subjects"][name] = subj;

    const int clips = train ? o.train_clips : o.test_clips;
    const int per_video = train ? o.clips_per_train_video : 1;
    nlohmann::json list = nlohmann::json::array();
    MotionSpec motion;
    std::string video;
    int subject = 0;
    for (int c = 0; c < clips; ++c) {
      const int v = c / per_video;
      const std::uint64_t base = (train ? 10'000'000ULL : 20'000'000ULL);
      if (c % per_video == 0) {
        subject = v % subjects;
        motion = random_motion(k, fresh(base + 2 * v), o.motion);
        video = name + "_video_" + std::to_string(v);
      }
      const std::uint64_t clip_seed = fresh(base + 1'000'000ULL + c);
      const std::vector<int> frames =
          sample_clip(o.motion.duration_frames, o.stride, o.clip_length,
                      train ? SampleMode::kTrain : SampleMode::kTest, clip_seed);
      const GeneratedClip gt = gen_clip(model, motion, shapes[subject], frames);
      NoiseSpec noise = o.noise;
      noise.seed = fresh(base + 3'000'000ULL + c);
      const MeshCuboid noisy = corrupt(gt, model, noise);

      char id[32];
      std::snprintf(id, sizeof id, "%s_%03d", name.c_str(), c);
      ClipManifest cm;
      cm.source_id = video;
      cm.frame_rate = o.motion.frame_rate;
      cm.stride = o.stride;
      cm.start = frames.front() / o.stride;
      cm.length = o.clip_length;
      cm.cuboid = std::string("clips/") + id + ".noisy.mcub";
      cm.joints = std::string("clips/") + id + ".gt.mjnt";
      cm.gt_cuboid = std::string("clips/") + id + ".gt.mcub";
      write_cuboid(dir / cm.cuboid, noisy);
      write_cuboid(dir / cm.gt_cuboid, gt.cuboid);
      write_joints(dir / cm.joints, gt.joints);

      nlohmann::json entry = cm;
      entry["id"] = id;
      entry["subject"] = subject;
      entry["motion_seed"] = motion.seed;
      entry["sample_seed"] = clip_seed;
      entry["noise_seed"] = noise.seed;
      list.push_back(entry);

      if (!train) {
        const JointSeq noisy_joints = regress_sequence(model.joint_regressor(), noisy);
        input_error_sum += mpjpe(noisy_joints, gt.joints);
      }
    }
    manifest["splits"][name] = list;
  }
  manifest["reference_input_mpjpe_mm"] = input_error_sum / o.test_clips;
  manifest["reference_note"] =
      "Synthetic noise is only tuned to the order of magnitude of real reconstruction "
      "backbones; this value is the benchmark's own measured input error.";
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace mvai
