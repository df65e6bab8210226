#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvai/body_model.hpp"
#include "mvai/conv3d.hpp"
#include "mvai/cuboid.hpp"
#include "mvai/optim.hpp"

namespace mvai {

enum class Activation { kLeakyRelu, kRelu, kIdentity };
enum class LossNorm { kL2, kSquaredL2 };

struct SmootherConfig {
  ConvGeometry geometry;
  int layers = 8;
  int channels = 8;
  bool residual = true;
  Activation activation = Activation::kLeakyRelu;
  double leaky_slope = 0.1;
  // Subtract the regressed root joint per frame before the network and add
  // it back afterwards.
  bool root_center = true;

  // Throws std::invalid_argument unless the geometry preserves volume
  // (unit stride, 2*pad = kernel - 1 on every axis) and sizes are positive.
  void validate() const;
};

void to_json(nlohmann::json& j, const SmootherConfig& c);
void from_json(const nlohmann::json& j, SmootherConfig& c);

// Conv stack 1 -> C -> ... -> C -> 1. Parameters are named "conv<l>.weight"
// and "conv<l>.bias".
struct SmootherParams {
  SmootherConfig config;
  ParamStore store;
};

// He-style normal init for every layer except the last, which is zero when
// `config.residual` is set (so the fresh network is the identity map).
SmootherParams init_smoother(const SmootherConfig& config, std::uint64_t seed);

// Runs the network on a cuboid. With root centering on, `root_weights` (one
// per vertex) define the root joint; they are required in that case.
MeshCuboid smooth(const SmootherParams& params, const MeshCuboid& input,
                  std::span<const double> root_weights);
MeshCuboid smooth(const SmootherParams& params, const MeshCuboid& input, const BodyModel& model);

// Per-keypoint loss terms, averaged by 1/T.
double j3d_loss(const JointSeq& pred, const JointSeq& gt, LossNorm norm = LossNorm::kL2);
double motion_loss(const JointSeq& pred, const JointSeq& gt, LossNorm norm = LossNorm::kL2);

struct LossConfig {
  bool motion_loss = true;
  LossNorm norm = LossNorm::kL2;
};

JointSeq regress_sequence(const Eigen::MatrixXd& regressor, const MeshCuboid& cuboid);
double total_loss(const MeshCuboid& pred, const JointSeq& gt, const BodyModel& model,
                  const LossConfig& loss = {});

struct SmootherClip {
  MeshCuboid input;
  JointSeq target;
};

// Training loss over a fixed clip set, evaluated in precision S. When the
// kernel never mixes vertices, only vertices that feed the regressor are
// propagated; the result is the same as running on the full mesh.
template <class S>
class SmootherObjective {
 public:
  SmootherObjective(const SmootherConfig& config, const Eigen::MatrixXd& regressor,
                    std::span<const SmootherClip> clips, const LossConfig& loss);

  int size() const { return static_cast<int>(clips_.size()); }
  int active_vertices() const { return static_cast<int>(active_.size()); }

  // Loss of clip i. When `grads` is non-null, scale * dL/dparams is added to
  // its gradient buffers (which are marked populated).
  double clip_loss(const ParamStore& params, int i, ParamStore* grads, double scale = 1.0) const;
  double mean_loss(const ParamStore& params) const;

  JointSeq predict_joints(const ParamStore& params, int i) const;
  // Hash of the hidden activation sign pattern on clip i; equal signatures
  // mean the loss is smooth between the two parameter sets' branches.
  std::uint64_t branch_signature(const ParamStore& params, int i) const;

 private:
  struct Prepared {
    Volume<S> input;                       // centered, restricted to active vertices
    std::vector<Eigen::Vector3d> root;     // per-frame root offset
    Eigen::MatrixXd target;                // T x 3k
  };

  SmootherConfig config_;
  LossConfig loss_;
  std::vector<int> active_;
  Eigen::MatrixXd regressor_;  // k x |active|
  std::vector<Prepared> clips_;
};

extern template class SmootherObjective<float>;
extern template class SmootherObjective<double>;

struct SmootherTrainConfig {
  int epochs = 600;
  int batch_size = 4;
  AdamConfig adam;
  std::uint64_t seed = 0;
  LossConfig loss;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double heldout_mpjpe_mm = 0.0;  // NaN when no held-out set is given
};

struct SmootherTrainResult {
  SmootherParams params;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string message;
};

// Adam on the mean clip loss over shuffled mini-batches. Stops at the first
// non-finite loss and returns the parameters from before that step.
SmootherTrainResult train_smoother(const SmootherConfig& config, const Eigen::MatrixXd& regressor,
                                   std::span<const SmootherClip> train,
                                   std::span<const SmootherClip> heldout,
                                   const SmootherTrainConfig& tc,
                                   const std::function<void(const EpochLog&)>& on_epoch = {});

// Finite-difference check of the double-precision training gradient on a
// random frames x vertices clip with a random 3-joint regressor. The last
// layer is given small random weights so that every layer receives gradient.
GradCheckResult smoother_grad_check(const SmootherConfig& config, int frames, int vertices, int probes,
                                    std::uint64_t seed, const LossConfig& loss = {});

// Checkpoint as MPRM plus a "<path>.json" sidecar with config and metadata.
void save_smoother(const std::filesystem::path& path, const SmootherParams& params,
                   const nlohmann::json& metadata = nlohmann::json::object());
SmootherParams load_smoother(const std::filesystem::path& path);

}  // namespace mvai
