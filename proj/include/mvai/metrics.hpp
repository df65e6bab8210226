#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvai/body_model.hpp"
#include "mvai/cuboid.hpp"
#include "mvai/smoother.hpp"

namespace mvai {

// Mean per-joint position error in millimeters. With `align_root` each
// sequence has its own joint 0 subtracted per frame first.
double mpjpe(const JointSeq& pred, const JointSeq& gt, bool align_root = true);

struct ClipScore {
  std::string clip_id;
  std::string video_id;
  double mpjpe_mm = 0.0;
};

struct EvalReport {
  std::vector<ClipScore> clips;
  std::map<std::string, double> per_video;  // mean over that video's clips
  double overall = 0.0;                     // mean over all clips
  bool align_root = true;
  std::string fingerprint;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const EvalReport& r);

struct EvalItem {
  std::string clip_id;
  std::string video_id;
  MeshCuboid prediction;
  JointSeq target;
};

// Regresses joints from every prediction and aggregates per clip, per video
// and overall.
EvalReport evaluate(const std::vector<EvalItem>& items, const BodyModel& model,
                    bool align_root = true);

// A loaded benchmark split (see synth.hpp for the on-disk layout).
struct BenchmarkClip {
  std::string id;
  std::string video;
  MeshCuboid noisy;
  JointSeq joints;
};

struct Benchmark {
  std::filesystem::path dir;
  nlohmann::json manifest;
  BodyModel model;
  std::vector<BenchmarkClip> train;
  std::vector<BenchmarkClip> test;
  double reference_input_mpjpe_mm = 0.0;
};

Benchmark load_benchmark(const std::filesystem::path& dir);

std::vector<SmootherClip> smoother_clips(const std::vector<BenchmarkClip>& clips);

// Same benchmark with the vertex order of every cuboid and the regressor
// columns permuted by one random permutation.
Benchmark shuffle_vertices(const Benchmark& bench, std::uint64_t seed);

struct AblationVariant {
  std::string name;
  SmootherConfig config;
  SmootherTrainConfig train;
};

struct AblationCell {
  std::uint64_t seed = 0;
  double mpjpe_mm = 0.0;
  bool diverged = false;
};

struct AblationRow {
  std::string name;
  std::vector<AblationCell> cells;
  double mean = 0.0;
  double stddev = 0.0;
};

struct AblationTable {
  std::string title;
  double input_mpjpe_mm = 0.0;
  std::vector<AblationRow> rows;
};

// Trains every variant with every seed (variant seed replaces train.seed)
// and reports held-out mean MPJPE. Divergence is recorded, not fatal.
AblationTable ablate(const Benchmark& bench, const std::vector<AblationVariant>& variants,
                     const std::vector<std::uint64_t>& seeds,
                     const std::function<void(const std::string&)>& progress = {});

enum class AblationStudy { kMotionLoss, kKernel, kLayers };

// Table rows for a study, built from one base configuration. Kernel rows are
// 5x1x3, 5x3x3, 3x1x3 and 5x1x1 with volume-preserving padding and are meant
// for a vertex-shuffled benchmark; the 12-layer row trains twice as long.
std::vector<AblationVariant> study_variants(AblationStudy study, const SmootherConfig& base,
                                            const SmootherTrainConfig& train);
std::string study_title(AblationStudy study);

// Number of seeds for which row `a` scores at most row `b`.
int seeds_not_worse(const AblationRow& a, const AblationRow& b);

nlohmann::json ablation_json(const AblationTable& t);
std::string ablation_text(const AblationTable& t);
std::string ablation_csv(const AblationTable& t);

// SA-PD error against the clothed ground truth as garments get thicker.
// Each point dresses the same body in a uniform garment offset and averages
// vertex error over `frames` root-centred poses of one random motion.
struct ProfilePoint {
  double thickness = 0.0;
  double mean_distance = 0.0;  // vertex to nearest bone segment, rest pose
  double mean_error = 0.0;
};

std::vector<ProfilePoint> sapd_distance_profile(const BodyModel& model, std::uint64_t seed,
                                                const std::vector<double>& thicknesses, int frames = 20);
bool strictly_increasing(const std::vector<ProfilePoint>& profile);

}  // namespace mvai
