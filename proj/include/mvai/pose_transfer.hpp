#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvai/cuboid.hpp"
#include "mvai/geometry.hpp"
#include "mvai/optim.hpp"
#include "mvai/smoother.hpp"

namespace mvai {

struct TransferConfig {
  int hidden = 64;        // encoder hidden width
  int latent = 128;       // P, pose latent size
  int features = 64;      // decoder per-vertex feature width
  int blocks = 3;
  double edge_weight = 0.1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TransferConfig& c);
void from_json(const nlohmann::json& j, TransferConfig& c);

struct TransferParams {
  TransferConfig config;
  ParamStore store;
};

// Pose mesh supplies the pose, identity mesh the body; `target` is the
// identity in the pose (training/evaluation only, may be empty).
struct TransferPair {
  Points pose;
  Mesh identity;
  Points target;
};

TransferParams init_transfer(const TransferConfig& config, std::uint64_t seed);

// Max-pooled per-vertex features of the pose mesh centred on its bounding box.
Eigen::VectorXd encode_pose(const TransferParams& params, const Points& pose_mesh);

// Output has the identity's vertex count and faces.
Mesh transfer(const TransferParams& params, const Points& pose_mesh, const Mesh& identity);

// Mean per-vertex distance plus edge_weight times the mean squared deviation
// of output edge lengths from the identity mesh's edge lengths.
double transfer_loss(const TransferParams& params, const TransferPair& pair);

// Loss and (optionally) gradients in precision S; gradients are scaled and
// added to `grads`.
template <class S>
double transfer_loss_grad(const TransferParams& params, const TransferPair& pair, ParamStore* grads,
                          double scale = 1.0);

// Mean per-vertex distance between `pred` and `target`.
double mean_vertex_error(const Points& pred, const Points& target);

struct TransferTrainConfig {
  int epochs = 60;
  int batch_size = 8;
  AdamConfig adam{1e-3};
  std::uint64_t seed = 0;
};

struct TransferEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double heldout_error = 0.0;  // mean per-vertex error, NaN without held-out set
};

struct TransferTrainResult {
  TransferParams params;
  std::vector<TransferEpochLog> log;
  bool diverged = false;
  std::string message;
};

TransferTrainResult train_transfer(const TransferConfig& config, std::span<const TransferPair> train,
                                   std::span<const TransferPair> heldout,
                                   const TransferTrainConfig& tc,
                                   const std::function<void(const TransferEpochLog&)>& on_epoch = {});

// Finite-difference check of the double-precision loss gradient on a random
// pair (pose mesh of `pose_vertices` points, identity strip mesh of
// `identity_vertices` points). The zero-initialized head is randomized first.
GradCheckResult transfer_grad_check(const TransferConfig& config, int pose_vertices, int identity_vertices,
                                    int probes, std::uint64_t seed);

void save_transfer(const std::filesystem::path& path, const TransferParams& params,
                   const nlohmann::json& metadata = nlohmann::json::object());
TransferParams load_transfer(const std::filesystem::path& path);

// Smooths the source (root weights from `root_weights`) and transfers every
// frame onto the identity. Output is T x N_id x 3.
MeshCuboid imitate(const SmootherParams& smoother, const TransferParams& transfer_params,
                   const MeshCuboid& source, const Mesh& identity,
                   std::span<const double> root_weights);

}  // namespace mvai
