#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvai/body_model.hpp"
#include "mvai/cuboid.hpp"
#include "mvai/pose_transfer.hpp"

namespace mvai {

// Splits a seed into independent sub-seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct Wave {
  int joint = 0;
  int axis = 0;
  double amplitude = 0.0;  // radians
  double frequency = 1.0;  // Hz
  double phase = 0.0;
};

// Joint angle i, axis a at time s: base(i, a) + sum of its waves
// amplitude * sin(2 pi frequency s + phase). Root translation is
// root_velocity * s plus a vertical bob.
struct MotionSpec {
  Points base;
  std::vector<Wave> waves;
  Eigen::Vector3d root_velocity = Eigen::Vector3d::Zero();
  double bob_amplitude = 0.0;
  double bob_frequency = 1.0;
  int duration_frames = 1000;
  double frame_rate = 50.0;
  std::uint64_t seed = 0;

  // Rejects non-positive frequencies and any joint whose worst-case
  // axis-angle norm could reach pi.
  void validate(int num_joints) const;
};

struct MotionOptions {
  double base_std = 0.15;
  double amplitude_max = 0.6;
  double freq_min = 0.03;
  double freq_max = 0.2;
  int waves_per_joint = 2;
  double root_speed_max = 0.4;
  double bob_amplitude = 0.02;
  int duration_frames = 1000;
  double frame_rate = 50.0;
};

void to_json(nlohmann::json& j, const MotionOptions& o);
void from_json(const nlohmann::json& j, MotionOptions& o);

MotionSpec random_motion(int num_joints, std::uint64_t seed, const MotionOptions& options = {});
PoseParams motion_pose(const MotionSpec& motion, double frame);

ShapeParams random_shape(int num_coeffs, std::uint64_t seed, double spread = 1.0);

struct GeneratedClip {
  MeshCuboid cuboid;
  JointSeq joints;
  std::vector<PoseParams> poses;
  ShapeParams shape;
  std::vector<int> frames;
};

// Poses the model at the given source frame indices. Joints are regressed
// from the stored (float) cuboid frames.
GeneratedClip gen_clip(const BodyModel& model, const MotionSpec& motion, const ShapeParams& shape,
                       std::span<const int> frames);
// Frames 0, stride, 2*stride, ... (T of them).
GeneratedClip gen_clip(const BodyModel& model, const MotionSpec& motion, const ShapeParams& shape,
                       int clip_length, int stride = 25);

struct NoiseSpec {
  double jitter_std = 0.0;         // white per-frame angle noise (rad)
  double drift_coeff = 0.0;        // AR(1) coefficient of the correlated drift
  double drift_std = 0.0;          // AR(1) innovation (rad)
  double outlier_prob = 0.0;       // per-frame probability of an outlier pose
  double outlier_magnitude = 0.0;  // rad added along a random axis on every joint
  double limb_jitter_std = 0.0;    // relative per-clip bone length noise
  std::uint64_t seed = 0;

  void validate() const;
  static NoiseSpec benchmark_default();
};

void to_json(nlohmann::json& j, const NoiseSpec& n);
void from_json(const nlohmann::json& j, NoiseSpec& n);

// Re-poses every frame with perturbed parameters; zero noise reproduces the
// clip exactly.
MeshCuboid corrupt(const GeneratedClip& clip, const BodyModel& model, const NoiseSpec& noise);

// Body mesh of `shape` with one level of midpoint subdivision, pushed out
// along vertex normals by a part-dependent garment thickness. Ground-truth
// posing uses the underlying body's skinning (midpoints average their ends).
struct ClothedIdentity {
  Mesh mesh;
  Eigen::MatrixXd weights;  // N' x k, driving-joint columns like the body model
  Skeleton skeleton;        // regressed from the underlying body
  ShapeParams shape;
};

struct ClothOptions {
  double torso = 0.05;
  double arms = 0.03;
  double legs = 0.045;
  double head = 0.0;
};

ClothedIdentity make_clothed_identity(const BodyModel& model, const ShapeParams& shape,
                                      const ClothOptions& options = {});
Points pose_clothed(const BodyModel& model, const ClothedIdentity& clothed, const PoseParams& pose);

// identities x poses pairs: pose meshes come from a different identity than
// the (rest-pose) identity mesh; the target is the identity in that pose.
std::vector<TransferPair> make_transfer_pairs(const BodyModel& model, int identities, int poses,
                                              std::uint64_t seed,
                                              const MotionOptions& motion = {});

struct BenchmarkOptions {
  std::uint64_t seed = 7;
  int train_clips = 64;
  int test_clips = 16;
  int clip_length = 16;
  int stride = 25;
  int train_subjects = 4;
  int test_subjects = 2;
  int clips_per_train_video = 4;
  NoiseSpec noise = NoiseSpec::benchmark_default();
  MotionOptions motion;
};

// Writes model.mbdy, manifest.json and clips/<id>.{noisy.mcub,gt.mcub,gt.mjnt}.
// Returns the manifest.
nlohmann::json make_benchmark(const std::filesystem::path& dir, const BenchmarkOptions& options);

}  // namespace mvai
