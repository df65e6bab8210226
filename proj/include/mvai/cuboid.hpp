#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvai/geometry.hpp"

namespace mvai {

// T×P×3 float32 point sequence in t-major, point, coordinate order. The tag
// distinguishes mesh cuboids (P = vertices) from joint sequences (P = joints)
// and selects the file magic.
template <class Tag>
class PointSequence {
 public:
  PointSequence(int frames, int points, std::vector<float> data);
  static PointSequence zeros(int frames, int points);
  static PointSequence from_frames(std::span<const Points> frames);

  int frames() const { return frames_; }
  int points() const { return points_; }

  float at(int t, int p, int c) const { return data_[index(t, p, c)]; }
  float& at(int t, int p, int c) { return data_[index(t, p, c)]; }

  Points frame(int t) const;
  void set_frame(int t, const Points& points);
  std::vector<Points> unflatten() const;

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const PointSequence&) const = default;

 private:
  std::size_t index(int t, int p, int c) const {
    return (static_cast<std::size_t>(t) * points_ + p) * 3 + c;
  }

  int frames_;
  int points_;
  std::vector<float> data_;
};

struct CuboidTag {
  static constexpr const char* kMagic = "MCUB";
  static constexpr const char* kName = "mesh cuboid";
};
struct JointTag {
  static constexpr const char* kMagic = "MJNT";
  static constexpr const char* kName = "joint sequence";
};

using MeshCuboid = PointSequence<CuboidTag>;
using JointSeq = PointSequence<JointTag>;

// Stacks meshes into a cuboid; rejects an empty sequence or mismatched N.
MeshCuboid make_cuboid(std::span<const Mesh> meshes);
MeshCuboid make_cuboid(std::span<const Points> meshes);

// "MCUB"/"MJNT": magic, version=1, T, N (or k), C=3 as u32, then float32 data.
inline constexpr std::size_t kSequenceHeaderBytes = 20;
void write_cuboid(const std::filesystem::path& path, const MeshCuboid& c);
MeshCuboid read_cuboid(const std::filesystem::path& path);
void write_joints(const std::filesystem::path& path, const JointSeq& j);
JointSeq read_joints(const std::filesystem::path& path);

enum class SampleMode { kTrain, kTest };

// Frame indices of a T-frame clip after keeping every `stride`-th frame.
// Test mode takes the centered window (start floor((M-T)/2) over the M strided
// frames); train mode draws the window start uniformly from `seed`.
std::vector<int> sample_clip(int total_frames, int stride, int clip_length, SampleMode mode,
                             std::uint64_t seed = 0);

struct ClipManifest {
  std::string source_id;
  double frame_rate = 50.0;
  int stride = 25;
  int start = 0;
  int length = 16;
  std::string cuboid;     // noisy / input cuboid, relative to the manifest directory
  std::string joints;     // ground-truth joints
  std::string gt_cuboid;  // optional ground-truth meshes

  // Checks stride >= 1 and that the referenced cuboid has `length` frames.
  void validate(const std::filesystem::path& base_dir) const;
};

void to_json(nlohmann::json& j, const ClipManifest& m);
void from_json(const nlohmann::json& j, ClipManifest& m);

}  // namespace mvai
