#include "mvai/smoother.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mvai/metrics.hpp"

namespace mvai {

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::kLeakyRelu, "leaky_relu"},
                                          {Activation::kRelu, "relu"},
                                          {Activation::kIdentity, "identity"}})

void SmootherConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("smoother needs at least one layer");
  if (channels < 1) throw std::invalid_argument("channel width must be positive");
  if (!std::isfinite(leaky_slope)) throw std::invalid_argument("leaky slope must be finite");
  static const char* axis[3] = {"time", "vertex", "coordinate"};
  for (int a = 0; a < 3; ++a) {
    if (geometry.kernel[a] < 1) throw std::invalid_argument(std::string("empty kernel on ") + axis[a]);
    if (geometry.stride[a] != 1 || 2 * geometry.padding[a] != geometry.kernel[a] - 1) {
      throw std::invalid_argument(std::string("kernel/stride/padding do not preserve the ") +
                                  axis[a] + " extent (kernel " + std::to_string(geometry.kernel[a]) +
                                  ", stride " + std::to_string(geometry.stride[a]) + ", padding " +
                                  std::to_string(geometry.padding[a]) + ")");
    }
  }
}

void to_json(nlohmann::json& j, const SmootherConfig& c) {
  j = {{"kernel", c.geometry.kernel},
       {"stride", c.geometry.stride},
       {"padding", c.geometry.padding},
       {"layers", c.layers},
       {"channels", c.channels},
       {"residual", c.residual},
       {"activation", c.activation},
       {"leaky_slope", c.leaky_slope},
       {"root_center", c.root_center}};
}

void from_json(const nlohmann::json& j, SmootherConfig& c) {
  SmootherConfig d;
  c.geometry.kernel = j.value("kernel", d.geometry.kernel);
  c.geometry.stride = j.value("stride", d.geometry.stride);
  c.geometry.padding = j.value("padding", d.geometry.padding);
  c.layers = j.value("layers", d.layers);
  c.channels = j.value("channels", d.channels);
  c.residual = j.value("residual", d.residual);
  c.activation = j.value("activation", d.activation);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  c.root_center = j.value("root_center", d.root_center);
}

namespace {

std::string weight_name(int l) { return "conv" + std::to_string(l) + ".weight"; }
std::string bias_name(int l) { return "conv" + std::to_string(l) + ".bias"; }

int layer_in(const SmootherConfig& c, int l) { return l == 0 ? 1 : c.channels; }
int layer_out(const SmootherConfig& c, int l) { return l == c.layers - 1 ? 1 : c.channels; }

template <class S>
struct Net {
  std::vector<std::vector<S>> w, b;
};

template <class S>
Net<S> load_net(const SmootherConfig& cfg, const ParamStore& store) {
  Net<S> net;
  const auto& e = store.entries();
  if (static_cast<int>(e.size()) != 2 * cfg.layers) {
    throw std::invalid_argument("parameter store does not match the smoother config");
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& w = e[2 * l].value.data;
    const auto& b = e[2 * l + 1].value.data;
    net.w.emplace_back(w.begin(), w.end());
    net.b.emplace_back(b.begin(), b.end());
  }
  return net;
}

template <class S>
S activate(const SmootherConfig& c, S x) {
  switch (c.activation) {
    case Activation::kLeakyRelu: return x > S(0) ? x : static_cast<S>(c.leaky_slope) * x;
    case Activation::kRelu: return x > S(0) ? x : S(0);
    case Activation::kIdentity: return x;
  }
  return x;
}

// Derivative expressed through the activation output (sign is preserved for
// leaky ReLU with positive slope and ReLU maps z <= 0 to 0).
template <class S>
S activate_grad(const SmootherConfig& c, S y) {
  switch (c.activation) {
    case Activation::kLeakyRelu: return y > S(0) ? S(1) : static_cast<S>(c.leaky_slope);
    case Activation::kRelu: return y > S(0) ? S(1) : S(0);
    case Activation::kIdentity: return S(1);
  }
  return S(1);
}

// Returns the network output; `inputs` (if given) receives each layer's input.
template <class S>
Volume<S> run_network(const SmootherConfig& cfg, const Net<S>& net, const Volume<S>& x0,
                      std::vector<Volume<S>>* inputs) {
  Volume<S> x = x0;
  for (int l = 0; l < cfg.layers; ++l) {
    Volume<S> z = conv3d_forward<S>(x, net.w[l], net.b[l], layer_out(cfg, l), cfg.geometry);
    const bool last = l == cfg.layers - 1;
    for (S& v : z.data) {
      if (!last) v = activate(cfg, v);
      if (!std::isfinite(v)) {
        throw std::runtime_error("non-finite activation in smoother layer " + std::to_string(l));
      }
    }
    if (inputs) inputs->push_back(std::move(x));
    x = std::move(z);
  }
  return x;
}

// Loss on T x k x 3 joints (row-major T x 3k); optionally writes dL/dpred.
double keypoint_loss(const double* pred, const double* gt, int T, int k, const LossConfig& lc,
                     double* grad) {
  const auto term = [&](const Eigen::Vector3d& e, double w, double* g0, double* g1) {
    const double n2 = e.squaredNorm();
    if (lc.norm == LossNorm::kSquaredL2) {
      if (g0) {
        for (int c = 0; c < 3; ++c) {
          g0[c] += w * 2.0 * e[c];
          if (g1) g1[c] -= w * 2.0 * e[c];
        }
      }
      return n2;
    }
    const double n = std::sqrt(n2);
    if (g0 && n > 0.0) {
      for (int c = 0; c < 3; ++c) {
        g0[c] += w * e[c] / n;
        if (g1) g1[c] -= w * e[c] / n;
      }
    }
    return n;
  };
  const double inv_t = 1.0 / T;
  const std::size_t row = 3 * static_cast<std::size_t>(k);
  if (grad) std::fill(grad, grad + row * T, 0.0);
  double j3d = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < k; ++i) {
      const std::size_t o = t * row + 3 * i;
      const Eigen::Vector3d e(pred[o] - gt[o], pred[o + 1] - gt[o + 1], pred[o + 2] - gt[o + 2]);
      j3d += term(e, inv_t, grad ? grad + o : nullptr, nullptr);
    }
  }
  double motion = 0.0;
  if (lc.motion_loss && T >= 2) {
    for (int t = 1; t < T; ++t) {
      for (int i = 0; i < k; ++i) {
        const std::size_t o = t * row + 3 * i, p = o - row;
        Eigen::Vector3d e;
        for (int c = 0; c < 3; ++c) e[c] = (pred[o + c] - pred[p + c]) - (gt[o + c] - gt[p + c]);
        motion += term(e, inv_t, grad ? grad + o : nullptr, grad ? grad + p : nullptr);
      }
    }
  }
  return j3d * inv_t + motion * inv_t;
}

Eigen::MatrixXd sequence_matrix(std::span<const float> data, int T, int k) {
  Eigen::MatrixXd m(T, 3 * k);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < 3 * k; ++j) m(t, j) = data[static_cast<std::size_t>(t) * 3 * k + j];
  return m;
}

void check_pair(const JointSeq& a, const JointSeq& b) {
  if (a.frames() != b.frames() || a.points() != b.points()) {
    throw std::invalid_argument("joint sequences differ in shape: " + std::to_string(a.frames()) +
                                "x" + std::to_string(a.points()) + " vs " +
                                std::to_string(b.frames()) + "x" + std::to_string(b.points()));
  }
}

double single_term(const JointSeq& pred, const JointSeq& gt, LossNorm norm, bool motion) {
  check_pair(pred, gt);
  const int T = pred.frames(), k = pred.points();
  double total = 0.0;
  for (int t = motion ? 1 : 0; t < T; ++t) {
    for (int i = 0; i < k; ++i) {
      Eigen::Vector3d e;
      for (int c = 0; c < 3; ++c) {
        e[c] = double(pred.at(t, i, c)) - gt.at(t, i, c);
        if (motion) e[c] -= double(pred.at(t - 1, i, c)) - gt.at(t - 1, i, c);
      }
      total += norm == LossNorm::kL2 ? e.norm() : e.squaredNorm();
    }
  }
  return total / T;
}

std::vector<double> root_offsets(const MeshCuboid& x, std::span<const double> root_weights) {
  const int T = x.frames(), N = x.points();
  std::vector<double> r(3 * static_cast<std::size_t>(T), 0.0);
  for (int t = 0; t < T; ++t)
    for (int v = 0; v < N; ++v) {
      const double w = root_weights[v];
      if (w == 0.0) continue;
      for (int c = 0; c < 3; ++c) r[3 * t + c] += w * x.at(t, v, c);
    }
  return r;
}

template <class S>
Volume<S> centered_volume(const MeshCuboid& x, const std::vector<int>& verts,
                          const std::vector<double>& root) {
  const int T = x.frames(), A = static_cast<int>(verts.size());
  Volume<S> vol(1, {T, A, 3});
  for (int t = 0; t < T; ++t)
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < 3; ++c)
        vol.at(0, t, a, c) = static_cast<S>(x.at(t, verts[a], c) - root[3 * t + c]);
  return vol;
}

}  // namespace

SmootherParams init_smoother(const SmootherConfig& config, std::uint64_t seed) {
  config.validate();
  SmootherParams p{config, {}};
  std::mt19937_64 rng(seed);
  const auto& g = config.geometry;
  const int taps = g.kernel[0] * g.kernel[1] * g.kernel[2];
  for (int l = 0; l < config.layers; ++l) {
    const int cin = layer_in(config, l), cout = layer_out(config, l);
    Tensor w = Tensor::zeros({cout, cin, g.kernel[0], g.kernel[1], g.kernel[2]});
    const bool last = l == config.layers - 1;
    if (!(last && config.residual)) {
      const double gain = last ? 1.0 : 2.0;
      std::normal_distribution<double> nd(0.0, std::sqrt(gain / (cin * taps)));
      for (double& v : w.data) v = nd(rng);
    }
    p.store.add(weight_name(l), std::move(w));
    p.store.add(bias_name(l), Tensor::zeros({cout}));
  }
  return p;
}

MeshCuboid smooth(const SmootherParams& params, const MeshCuboid& input,
                  std::span<const double> root_weights) {
  const auto& cfg = params.config;
  cfg.validate();
  const int T = input.frames(), N = input.points();
  std::vector<double> root(3 * static_cast<std::size_t>(T), 0.0);
  if (cfg.root_center) {
    if (static_cast<int>(root_weights.size()) != N) {
      throw std::invalid_argument("root centering needs one root weight per vertex (got " +
                                  std::to_string(root_weights.size()) + " for " +
                                  std::to_string(N) + " vertices)");
    }
    root = root_offsets(input, root_weights);
  }
  std::vector<int> all(N);
  std::iota(all.begin(), all.end(), 0);
  const Volume<float> x = centered_volume<float>(input, all, root);
  const Net<float> net = load_net<float>(cfg, params.store);
  const Volume<float> y = run_network<float>(cfg, net, x, nullptr);
  MeshCuboid out = MeshCuboid::zeros(T, N);
  for (int t = 0; t < T; ++t)
    for (int v = 0; v < N; ++v)
      for (int c = 0; c < 3; ++c) {
        // The residual is added to the raw input so a zero delta is exact.
        const double d = y.at(0, t, v, c);
        out.at(t, v, c) = static_cast<float>(cfg.residual ? input.at(t, v, c) + d : d + root[3 * t + c]);
      }
  return out;
}

MeshCuboid smooth(const SmootherParams& params, const MeshCuboid& input, const BodyModel& model) {
  const Eigen::VectorXd w = model.joint_regressor().row(0).transpose();
  return smooth(params, input, std::span<const double>(w.data(), w.size()));
}

double j3d_loss(const JointSeq& pred, const JointSeq& gt, LossNorm norm) {
  return single_term(pred, gt, norm, false);
}

double motion_loss(const JointSeq& pred, const JointSeq& gt, LossNorm norm) {
  if (pred.frames() < 2) throw std::invalid_argument("motion loss needs at least two frames");
  return single_term(pred, gt, norm, true);
}

JointSeq regress_sequence(const Eigen::MatrixXd& regressor, const MeshCuboid& cuboid) {
  if (regressor.cols() != cuboid.points()) {
    throw std::invalid_argument("regressor expects " + std::to_string(regressor.cols()) +
                                " vertices, cuboid has " + std::to_string(cuboid.points()));
  }
  const int T = cuboid.frames(), N = cuboid.points(), k = static_cast<int>(regressor.rows());
  JointSeq out = JointSeq::zeros(T, k);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < k; ++i) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int v = 0; v < N; ++v) {
        const double w = regressor(i, v);
        if (w == 0.0) continue;
        for (int c = 0; c < 3; ++c) acc[c] += w * cuboid.at(t, v, c);
      }
      for (int c = 0; c < 3; ++c) out.at(t, i, c) = static_cast<float>(acc[c]);
    }
  return out;
}

double total_loss(const MeshCuboid& pred, const JointSeq& gt, const BodyModel& model,
                  const LossConfig& loss) {
  const JointSeq j = regress_sequence(model.joint_regressor(), pred);
  double l = j3d_loss(j, gt, loss.norm);
  if (loss.motion_loss) l += motion_loss(j, gt, loss.norm);
  return l;
}

template <class S>
SmootherObjective<S>::SmootherObjective(const SmootherConfig& config,
                                        const Eigen::MatrixXd& regressor,
                                        std::span<const SmootherClip> clips,
                                        const LossConfig& loss)
    : config_(config), loss_(loss) {
  config_.validate();
  const int N = static_cast<int>(regressor.cols()), k = static_cast<int>(regressor.rows());
  const bool local = config_.geometry.kernel[1] == 1;
  for (int v = 0; v < N; ++v) {
    if (!local || (regressor.col(v).array() != 0.0).any()) active_.push_back(v);
  }
  regressor_.resize(k, active_.size());
  for (std::size_t a = 0; a < active_.size(); ++a) regressor_.col(a) = regressor.col(active_[a]);
  const Eigen::VectorXd rw = regressor.row(0).transpose();
  for (const auto& clip : clips) {
    if (clip.input.points() != N || clip.target.points() != k ||
        clip.input.frames() != clip.target.frames()) {
      throw std::invalid_argument("training clip does not match the regressor / its target");
    }
    const int T = clip.input.frames();
    std::vector<double> root(3 * static_cast<std::size_t>(T), 0.0);
    if (config_.root_center) root = root_offsets(clip.input, std::span<const double>(rw.data(), N));
    Prepared p;
    p.input = centered_volume<S>(clip.input, active_, root);
    for (int t = 0; t < T; ++t) p.root.emplace_back(root[3 * t], root[3 * t + 1], root[3 * t + 2]);
    p.target = sequence_matrix(clip.target.data(), T, k);
    clips_.push_back(std::move(p));
  }
}

template <class S>
double SmootherObjective<S>::clip_loss(const ParamStore& params, int i, ParamStore* grads,
                                       double scale) const {
  const Prepared& clip = clips_.at(i);
  const Net<S> net = load_net<S>(config_, params);
  std::vector<Volume<S>> inputs;
  const Volume<S> y = run_network<S>(config_, net, clip.input, grads ? &inputs : nullptr);

  const int T = clip.input.dims[0], A = clip.input.dims[1], k = static_cast<int>(regressor_.rows());
  const std::size_t row = 3 * static_cast<std::size_t>(k);
  // Predicted joints, row-major T x 3k.
  std::vector<double> pred(row * T, 0.0), gt(row * T);
  std::vector<double> pos(3 * static_cast<std::size_t>(A));
  for (int t = 0; t < T; ++t) {
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < 3; ++c) {
        double p = y.at(0, t, a, c);
        if (config_.residual) p += clip.input.at(0, t, a, c);
        pos[3 * a + c] = p;
      }
    for (int j = 0; j < k; ++j) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int a = 0; a < A; ++a) {
        const double w = regressor_(j, a);
        if (w == 0.0) continue;
        for (int c = 0; c < 3; ++c) acc[c] += w * pos[3 * a + c];
      }
      for (int c = 0; c < 3; ++c) {
        pred[t * row + 3 * j + c] = acc[c] + clip.root[t][c];
        gt[t * row + 3 * j + c] = clip.target(t, 3 * j + c);
      }
    }
  }
  std::vector<double> dpred(grads ? row * T : 0);
  const double loss = keypoint_loss(pred.data(), gt.data(), T, k, loss_, grads ? dpred.data() : nullptr);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite smoother loss");
  if (!grads) return loss;

  Volume<S> g(1, {T, A, 3});
  for (int t = 0; t < T; ++t)
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
          const double w = regressor_(j, a);
          if (w != 0.0) acc += w * dpred[t * row + 3 * j + c];
        }
        g.at(0, t, a, c) = static_cast<S>(acc);
      }

  auto& entries = grads->entries();
  for (int l = config_.layers - 1; l >= 0; --l) {
    const Volume<S>& x = inputs[l];
    std::vector<S> gw(net.w[l].size(), S(0)), gb(net.b[l].size(), S(0));
    Volume<S> gin;
    conv3d_backward<S>(x, net.w[l], g, config_.geometry, l > 0 ? &gin : nullptr, gw, gb);
    auto& ew = entries[2 * l];
    auto& eb = entries[2 * l + 1];
    for (std::size_t q = 0; q < gw.size(); ++q) ew.grad.data[q] += scale * gw[q];
    for (std::size_t q = 0; q < gb.size(); ++q) eb.grad.data[q] += scale * gb[q];
    ew.grad_ready = eb.grad_ready = true;
    if (l > 0) {
      // x is the activated output of layer l-1.
      for (std::size_t q = 0; q < gin.data.size(); ++q) gin.data[q] *= activate_grad(config_, x.data[q]);
      g = std::move(gin);
    }
  }
  return loss;
}

template <class S>
double SmootherObjective<S>::mean_loss(const ParamStore& params) const {
  double s = 0.0;
  for (int i = 0; i < size(); ++i) s += clip_loss(params, i, nullptr);
  return size() > 0 ? s / size() : 0.0;
}

template <class S>
JointSeq SmootherObjective<S>::predict_joints(const ParamStore& params, int i) const {
  const Prepared& clip = clips_.at(i);
  const Net<S> net = load_net<S>(config_, params);
  const Volume<S> y = run_network<S>(config_, net, clip.input, nullptr);
  const int T = clip.input.dims[0], A = clip.input.dims[1], k = static_cast<int>(regressor_.rows());
  JointSeq out = JointSeq::zeros(T, k);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < k; ++j) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int a = 0; a < A; ++a) {
        const double w = regressor_(j, a);
        if (w == 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          double p = y.at(0, t, a, c);
          if (config_.residual) p += clip.input.at(0, t, a, c);
          acc[c] += w * p;
        }
      }
      for (int c = 0; c < 3; ++c) out.at(t, j, c) = static_cast<float>(acc[c] + clip.root[t][c]);
    }
  return out;
}

template <class S>
std::uint64_t SmootherObjective<S>::branch_signature(const ParamStore& params, int i) const {
  const Net<S> net = load_net<S>(config_, params);
  std::vector<Volume<S>> inputs;
  run_network<S>(config_, net, clips_.at(i).input, &inputs);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t l = 1; l < inputs.size(); ++l)
    for (S v : inputs[l].data) h = (h ^ (v > S(0) ? 1u : 2u)) * 0x100000001b3ULL;
  return h;
}

template class SmootherObjective<float>;
template class SmootherObjective<double>;

SmootherTrainResult train_smoother(const SmootherConfig& config, const Eigen::MatrixXd& regressor,
                                   std::span<const SmootherClip> train,
                                   std::span<const SmootherClip> heldout,
                                   const SmootherTrainConfig& tc,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  tc.adam.validate();
  if (tc.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (tc.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  SmootherTrainResult result{init_smoother(config, tc.seed), {}, false, {}};
  if (tc.epochs == 0) return result;
  if (train.empty()) throw std::invalid_argument("empty training set");

  const SmootherObjective<float> obj(config, regressor, train, tc.loss);
  const SmootherObjective<float> held(config, regressor, heldout, tc.loss);
  std::vector<JointSeq> held_gt;
  for (const auto& c : heldout) held_gt.push_back(c.target);

  ParamStore& store = result.params.store;
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(obj.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      ParamStore before = store;
      store.zero_grad();
      try {
        for (std::size_t q = b0; q < b1; ++q) sum += obj.clip_loss(store, order[q], &store, scale);
        adam_step(store, tc.adam);
        for (const auto& e : store.entries())
          for (double v : e.value.data)
            if (!std::isfinite(v)) throw std::runtime_error("non-finite parameter after update");
      } catch (const std::runtime_error& err) {
        store = std::move(before);
        store.zero_grad();
        result.diverged = true;
        result.message = "diverged in epoch " + std::to_string(epoch) + ": " + err.what();
        return result;
      }
    }
    EpochLog log{epoch, sum / obj.size(), std::numeric_limits<double>::quiet_NaN()};
    if (held.size() > 0) {
      double m = 0.0;
      for (int i = 0; i < held.size(); ++i) m += mpjpe(held.predict_joints(store, i), held_gt[i]);
      log.heldout_mpjpe_mm = m / held.size();
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

void save_smoother(const std::filesystem::path& path, const SmootherParams& params,
                   const nlohmann::json& metadata) {
  save_params(path, params.store);
  nlohmann::json side = {{"kind", "smoother"}, {"config", params.config}, {"metadata", metadata}};
  std::ofstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("cannot write " + path.string() + ".json");
  f << side.dump(2) << "\n";
}

SmootherParams load_smoother(const std::filesystem::path& path) {
  std::ifstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("missing checkpoint sidecar " + path.string() + ".json");
  const nlohmann::json side = nlohmann::json::parse(f);
  if (side.value("kind", "") != "smoother") {
    throw std::runtime_error(path.string() + " is not a smoother checkpoint");
  }
  SmootherParams p{side.at("config").get<SmootherConfig>(), load_params(path)};
  const SmootherParams ref = init_smoother(p.config, 0);
  const auto& a = p.store.entries();
  const auto& b = ref.store.entries();
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].name == b[i].name && a[i].value.shape == b[i].value.shape;
  }
  if (!ok) throw std::runtime_error(path.string() + ": tensors do not match the stored config");
  return p;
}

GradCheckResult smoother_grad_check(const SmootherConfig& config, int frames, int vertices, int probes,
                                    std::uint64_t seed, const LossConfig& loss) {
  if (frames < 1 || vertices < 1) throw std::invalid_argument("grad check needs a non-empty clip");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const int k = 3;
  Eigen::MatrixXd reg(k, vertices);
  for (int j = 0; j < k; ++j) {
    for (int v = 0; v < vertices; ++v) reg(j, v) = ud(rng);
    reg.row(j) /= reg.row(j).sum();
  }
  MeshCuboid input = MeshCuboid::zeros(frames, vertices);
  for (float& v : input.data()) v = static_cast<float>(0.3 * nd(rng));
  JointSeq target = JointSeq::zeros(frames, k);
  for (float& v : target.data()) v = static_cast<float>(0.3 * nd(rng));
  const std::vector<SmootherClip> clips{{input, target}};
  const SmootherObjective<double> obj(config, reg, clips, loss);

  SmootherParams params = init_smoother(config, seed + 1);
  for (auto& e : params.store.entries()) {
    if (e.name == "conv" + std::to_string(config.layers - 1) + ".weight") {
      for (double& v : e.value.data) v = 0.2 * nd(rng);
    }
  }
  params.store.zero_grad();
  obj.clip_loss(params.store, 0, &params.store);
  return grad_check([&](const ParamStore& s) { return obj.clip_loss(s, 0, nullptr); }, params.store, probes,
                    seed + 2, 1e-4, [&](const ParamStore& s) { return obj.branch_signature(s, 0); });
}

}  // namespace mvai
