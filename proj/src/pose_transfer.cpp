#include "mvai/pose_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace mvai {

void TransferConfig::validate() const {
  if (hidden < 1 || latent < 1 || features < 1 || blocks < 1) {
    throw std::invalid_argument("transfer network sizes must be positive");
  }
  if (!(edge_weight >= 0.0)) throw std::invalid_argument("edge weight must be non-negative");
}

void to_json(nlohmann::json& j, const TransferConfig& c) {
  j = {{"hidden", c.hidden},
       {"latent", c.latent},
       {"features", c.features},
       {"blocks", c.blocks},
       {"edge_weight", c.edge_weight}};
}

void from_json(const nlohmann::json& j, TransferConfig& c) {
  TransferConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.latent = j.value("latent", d.latent);
  c.features = j.value("features", d.features);
  c.blocks = j.value("blocks", d.blocks);
  c.edge_weight = j.value("edge_weight", d.edge_weight);
}

namespace {

constexpr double kNormEps = 1e-5;

template <class S>
using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowS = Eigen::Matrix<S, 1, Eigen::Dynamic>;

std::string blk(int b, const char* what) { return "block" + std::to_string(b) + "." + what; }

template <class S>
MatS<S> mat(const ParamStore& store, const std::string& name) {
  const Tensor& t = store.value(name);
  const int rows = t.shape[0], cols = t.shape.size() > 1 ? t.shape[1] : 1;
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             t.data.data(), rows, cols)
      .template cast<S>();
}

template <class S>
VecS<S> vec(const ParamStore& store, const std::string& name) {
  const Tensor& t = store.value(name);
  return Eigen::Map<const Eigen::VectorXd>(t.data.data(), t.data.size()).template cast<S>();
}

template <class Derived>
void add_grad(ParamStore& store, const std::string& name, const Eigen::MatrixBase<Derived>& g,
              double scale) {
  const auto m = g.eval();  // coefficient access on a lazy product re-runs the whole product
  Tensor& t = store.grad(name);
  const int rows = t.shape[0], cols = t.shape.size() > 1 ? t.shape[1] : 1;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t.data[static_cast<std::size_t>(r) * cols + c] += scale * double(m(r, c));
}

template <class S>
struct BlockW {
  MatS<S> gz, gx, wo;
  VecS<S> gb, bo;
};

template <class S>
struct TNet {
  MatS<S> w1, w2, win, wh;
  VecS<S> b1, b2, bin, bh;
  std::vector<BlockW<S>> blocks;
};

template <class S>
TNet<S> load_tnet(const TransferParams& p) {
  const ParamStore& s = p.store;
  TNet<S> n;
  n.w1 = mat<S>(s, "enc1.weight");
  n.b1 = vec<S>(s, "enc1.bias");
  n.w2 = mat<S>(s, "enc2.weight");
  n.b2 = vec<S>(s, "enc2.bias");
  n.win = mat<S>(s, "dec_in.weight");
  n.bin = vec<S>(s, "dec_in.bias");
  for (int b = 0; b < p.config.blocks; ++b) {
    n.blocks.push_back({mat<S>(s, blk(b, "mod_z.weight")), mat<S>(s, blk(b, "mod_x.weight")),
                        mat<S>(s, blk(b, "out.weight")), vec<S>(s, blk(b, "mod.bias")),
                        vec<S>(s, blk(b, "out.bias"))});
  }
  n.wh = mat<S>(s, "head.weight");
  n.bh = vec<S>(s, "head.bias");
  return n;
}

// Bounding-box center: unchanged by reordering or duplicating points.
Eigen::RowVector3d box_center(const Points& p) {
  return 0.5 * (p.colwise().minCoeff() + p.colwise().maxCoeff());
}

template <class S>
struct Encoded {
  VecS<S> z;
  std::vector<int> argmax;
  MatS<S> x;  // centered pose points, Np x 3
};

template <class S>
Encoded<S> run_encoder(const TNet<S>& n, const Points& pose) {
  if (pose.rows() < 1) throw std::invalid_argument("pose mesh has no vertices");
  Encoded<S> e;
  e.x = (pose.rowwise() - box_center(pose)).template cast<S>();
  const int P = static_cast<int>(n.w2.rows());
  e.z = VecS<S>::Constant(P, -std::numeric_limits<S>::infinity());
  e.argmax.assign(P, 0);
  VecS<S> a1(n.w1.rows()), f(P), xv(3);
  // One vertex at a time, through identical code, so a point's feature does
  // not depend on where it sits in the array.
  for (Eigen::Index v = 0; v < e.x.rows(); ++v) {
    xv = e.x.row(v).transpose();
    a1.noalias() = n.w1 * xv;
    a1 = (a1 + n.b1).cwiseMax(S(0));
    f.noalias() = n.w2 * a1;
    f += n.b2;
    for (int p = 0; p < P; ++p) {
      if (f[p] > e.z[p]) {
        e.z[p] = f[p];
        e.argmax[p] = static_cast<int>(v);
      }
    }
  }
  return e;
}

template <class S>
struct DecodeCache {
  MatS<S> xc;                   // centered identity, N x 3
  std::vector<MatS<S>> h;       // block inputs, then final features
  std::vector<MatS<S>> normed;  // n_b
  std::vector<RowS<S>> inv_std;
  std::vector<MatS<S>> mod;     // [gamma beta], N x 2D
  std::vector<MatS<S>> pre;     // pre-activation A_b
};

template <class S>
MatS<S> run_decoder(const TNet<S>& n, const VecS<S>& z, const Points& identity,
                    const Eigen::RowVector3d& center, DecodeCache<S>& c) {
  const int D = static_cast<int>(n.win.rows());
  const Eigen::Index N = identity.rows();
  c.xc = (identity.rowwise() - center).template cast<S>();
  MatS<S> h = c.xc * n.win.transpose();
  h.rowwise() += n.bin.transpose();
  for (std::size_t b = 0; b < n.blocks.size(); ++b) {
    const BlockW<S>& w = n.blocks[b];
    MatS<S> nb;
    RowS<S> inv;
    if (b == 0) {
      nb = h;
    } else {
      const RowS<S> mu = h.colwise().mean();
      nb = h.rowwise() - mu;
      const RowS<S> var = nb.array().square().colwise().mean();
      inv = (var.array() + S(kNormEps)).rsqrt();
      nb = nb * inv.asDiagonal();
    }
    const VecS<S> gz = w.gz * z + w.gb;
    MatS<S> g = c.xc * w.gx.transpose();
    g.rowwise() += gz.transpose();
    MatS<S> a = ((g.leftCols(D).array() + S(1)) * nb.array() + g.rightCols(D).array()).matrix();
    const MatS<S> r = a.cwiseMax(S(0));
    c.h.push_back(h);
    c.normed.push_back(std::move(nb));
    c.inv_std.push_back(std::move(inv));
    c.mod.push_back(std::move(g));
    c.pre.push_back(std::move(a));
    h += r * w.wo.transpose();
    h.rowwise() += w.bo.transpose();
  }
  c.h.push_back(h);
  MatS<S> out = h * n.wh.transpose();
  out.rowwise() += n.bh.transpose();
  out += c.xc;
  (void)N;
  return out;
}

template <class S>
Points to_points(const MatS<S>& local, const Eigen::RowVector3d& center) {
  Points p = local.template cast<double>();
  p.rowwise() += center;
  return p;
}

}  // namespace

TransferParams init_transfer(const TransferConfig& config, std::uint64_t seed) {
  config.validate();
  TransferParams p{config, {}};
  std::mt19937_64 rng(seed);
  const auto normal = [&](std::vector<int> shape, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    if (stddev > 0.0) {
      std::normal_distribution<double> nd(0.0, stddev);
      for (double& v : t.data) v = nd(rng);
    }
    return t;
  };
  const int H = config.hidden, P = config.latent, D = config.features;
  p.store.add("enc1.weight", normal({H, 3}, std::sqrt(2.0 / 3.0)));
  p.store.add("enc1.bias", Tensor::zeros({H}));
  p.store.add("enc2.weight", normal({P, H}, std::sqrt(2.0 / H)));
  p.store.add("enc2.bias", Tensor::zeros({P}));
  p.store.add("dec_in.weight", normal({D, 3}, std::sqrt(1.0 / 3.0)));
  p.store.add("dec_in.bias", Tensor::zeros({D}));
  for (int b = 0; b < config.blocks; ++b) {
    p.store.add(blk(b, "mod_z.weight"), normal({2 * D, P}, 0.1 / std::sqrt(double(P))));
    p.store.add(blk(b, "mod_x.weight"), normal({2 * D, 3}, 0.1));
    p.store.add(blk(b, "mod.bias"), Tensor::zeros({2 * D}));
    p.store.add(blk(b, "out.weight"), normal({D, D}, std::sqrt(1.0 / D)));
    p.store.add(blk(b, "out.bias"), Tensor::zeros({D}));
  }
  p.store.add("head.weight", Tensor::zeros({3, D}));
  p.store.add("head.bias", Tensor::zeros({3}));
  return p;
}

Eigen::VectorXd encode_pose(const TransferParams& params, const Points& pose_mesh) {
  const TNet<float> n = load_tnet<float>(params);
  return run_encoder(n, pose_mesh).z.cast<double>();
}

Mesh transfer(const TransferParams& params, const Points& pose_mesh, const Mesh& identity) {
  if (identity.vertices.rows() < 1) throw std::invalid_argument("identity mesh has no vertices");
  const TNet<float> n = load_tnet<float>(params);
  const Encoded<float> e = run_encoder(n, pose_mesh);
  DecodeCache<float> cache;
  const Eigen::RowVector3d center = box_center(identity.vertices);
  Mesh out{to_points(run_decoder(n, e.z, identity.vertices, center, cache), center), identity.faces};
  if (!out.vertices.allFinite()) throw std::runtime_error("pose transfer produced non-finite output");
  return out;
}

double mean_vertex_error(const Points& pred, const Points& target) {
  if (pred.rows() != target.rows() || pred.rows() == 0) {
    throw std::invalid_argument("vertex error needs equally sized, non-empty point sets");
  }
  double s = 0.0;
  for (Eigen::Index v = 0; v < pred.rows(); ++v) s += (pred.row(v) - target.row(v)).norm();
  return s / pred.rows();
}

template <class S>
double transfer_loss_grad(const TransferParams& params, const TransferPair& pair, ParamStore* grads,
                          double scale) {
  const Eigen::Index N = pair.identity.vertices.rows();
  if (pair.target.rows() != N) throw std::invalid_argument("transfer pair lacks a matching target");
  const TNet<S> n = load_tnet<S>(params);
  const Encoded<S> enc = run_encoder(n, pair.pose);
  DecodeCache<S> cache;
  const Eigen::RowVector3d center = box_center(pair.identity.vertices);
  const MatS<S> local = run_decoder(n, enc.z, pair.identity.vertices, center, cache);
  const Points out = to_points(local, center);

  // Loss in double.
  Points dout = Points::Zero(N, 3);
  double data = 0.0;
  for (Eigen::Index v = 0; v < N; ++v) {
    const Eigen::RowVector3d d = out.row(v) - pair.target.row(v);
    const double len = d.norm();
    data += len;
    if (len > 0.0) dout.row(v) += d / (len * N);
  }
  data /= N;
  double edge = 0.0;
  const double lambda = params.config.edge_weight;
  const auto edges = mesh_edges(pair.identity.faces);
  if (lambda > 0.0 && !edges.empty()) {
    const double inv_e = 1.0 / edges.size();
    for (const auto& [a, b] : edges) {
      const Eigen::RowVector3d d = out.row(a) - out.row(b);
      const double len = d.norm();
      const double rest = (pair.identity.vertices.row(a) - pair.identity.vertices.row(b)).norm();
      const double r = len - rest;
      edge += r * r;
      if (len > 0.0) {
        const Eigen::RowVector3d g = lambda * inv_e * 2.0 * r * d / len;
        dout.row(a) += g;
        dout.row(b) -= g;
      }
    }
    edge *= inv_e;
  }
  const double loss = data + lambda * edge;
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite transfer loss");
  if (!grads) return loss;

  const MatS<S> dO = dout.cast<S>();
  const int D = params.config.features;
  const int B = params.config.blocks;
  ParamStore& g = *grads;
  add_grad(g, "head.weight", dO.transpose() * cache.h[B], scale);
  add_grad(g, "head.bias", dO.colwise().sum().transpose(), scale);
  MatS<S> dH = dO * n.wh;
  VecS<S> dz = VecS<S>::Zero(enc.z.size());
  for (int b = B - 1; b >= 0; --b) {
    const BlockW<S>& w = n.blocks[b];
    const MatS<S> r = cache.pre[b].cwiseMax(S(0));
    add_grad(g, blk(b, "out.weight"), dH.transpose() * r, scale);
    add_grad(g, blk(b, "out.bias"), dH.colwise().sum().transpose(), scale);
    MatS<S> dA = dH * w.wo;
    dA = (cache.pre[b].array() > S(0)).select(dA, S(0));
    const MatS<S>& mod = cache.mod[b];
    MatS<S> dG(N, 2 * D);
    dG.leftCols(D) = (dA.array() * cache.normed[b].array()).matrix();
    dG.rightCols(D) = dA;
    const MatS<S> dn = (dA.array() * (mod.leftCols(D).array() + S(1))).matrix();
    add_grad(g, blk(b, "mod_x.weight"), dG.transpose() * cache.xc, scale);
    const VecS<S> dgz = dG.colwise().sum().transpose();
    add_grad(g, blk(b, "mod_z.weight"), dgz * enc.z.transpose(), scale);
    add_grad(g, blk(b, "mod.bias"), dgz, scale);
    dz += w.gz.transpose() * dgz;
    if (b == 0) {
      dH += dn;
    } else {
      const MatS<S>& nb = cache.normed[b];
      const RowS<S> mean_dn = dn.colwise().mean();
      const RowS<S> mean_dnn = (dn.array() * nb.array()).matrix().colwise().mean();
      MatS<S> t = dn.rowwise() - mean_dn;
      t -= (nb.array().rowwise() * mean_dnn.array()).matrix();
      dH += t * cache.inv_std[b].asDiagonal();
    }
  }
  add_grad(g, "dec_in.weight", dH.transpose() * cache.xc, scale);
  add_grad(g, "dec_in.bias", dH.colwise().sum().transpose(), scale);

  // Max pool routes each latent gradient to its argmax vertex.
  const int H = static_cast<int>(n.w1.rows()), P = static_cast<int>(n.w2.rows());
  MatS<S> dW1 = MatS<S>::Zero(H, 3), dW2 = MatS<S>::Zero(P, H);
  VecS<S> db1 = VecS<S>::Zero(H), db2 = VecS<S>::Zero(P);
  std::vector<int> verts(enc.argmax.begin(), enc.argmax.end());
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  for (int v : verts) {
    VecS<S> df = VecS<S>::Zero(P);
    for (int p = 0; p < P; ++p)
      if (enc.argmax[p] == v) df[p] = dz[p];
    const VecS<S> xv = enc.x.row(v).transpose();
    const VecS<S> a1 = (n.w1 * xv + n.b1).cwiseMax(S(0));
    dW2 += df * a1.transpose();
    db2 += df;
    VecS<S> da1 = n.w2.transpose() * df;
    da1 = (a1.array() > S(0)).select(da1, S(0));
    dW1 += da1 * xv.transpose();
    db1 += da1;
  }
  add_grad(g, "enc1.weight", dW1, scale);
  add_grad(g, "enc1.bias", db1, scale);
  add_grad(g, "enc2.weight", dW2, scale);
  add_grad(g, "enc2.bias", db2, scale);
  return loss;
}

template double transfer_loss_grad<float>(const TransferParams&, const TransferPair&, ParamStore*,
                                          double);
template double transfer_loss_grad<double>(const TransferParams&, const TransferPair&, ParamStore*,
                                           double);

double transfer_loss(const TransferParams& params, const TransferPair& pair) {
  return transfer_loss_grad<float>(params, pair, nullptr);
}

TransferTrainResult train_transfer(const TransferConfig& config, std::span<const TransferPair> train,
                                   std::span<const TransferPair> heldout,
                                   const TransferTrainConfig& tc,
                                   const std::function<void(const TransferEpochLog&)>& on_epoch) {
  tc.adam.validate();
  if (tc.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (tc.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  TransferTrainResult result{init_transfer(config, tc.seed), {}, false, {}};
  if (tc.epochs == 0) return result;
  if (train.empty()) throw std::invalid_argument("empty training set");

  ParamStore& store = result.params.store;
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(train.size());
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
        for (std::size_t q = b0; q < b1; ++q) {
          sum += transfer_loss_grad<float>(result.params, train[order[q]], &store, scale);
        }
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
    TransferEpochLog log{epoch, sum / train.size(), std::numeric_limits<double>::quiet_NaN()};
    if (!heldout.empty()) {
      double m = 0.0;
      for (const auto& pair : heldout) {
        m += mean_vertex_error(transfer(result.params, pair.pose, pair.identity).vertices, pair.target);
      }
      log.heldout_error = m / heldout.size();
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

void save_transfer(const std::filesystem::path& path, const TransferParams& params,
                   const nlohmann::json& metadata) {
  save_params(path, params.store);
  nlohmann::json side = {{"kind", "transfer"}, {"config", params.config}, {"metadata", metadata}};
  std::ofstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("cannot write " + path.string() + ".json");
  f << side.dump(2) << "\n";
}

TransferParams load_transfer(const std::filesystem::path& path) {
  std::ifstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("missing checkpoint sidecar " + path.string() + ".json");
  const nlohmann::json side = nlohmann::json::parse(f);
  if (side.value("kind", "") != "transfer") {
    throw std::runtime_error(path.string() + " is not a pose-transfer checkpoint");
  }
  TransferParams p{side.at("config").get<TransferConfig>(), load_params(path)};
  const TransferParams ref = init_transfer(p.config, 0);
  const auto& a = p.store.entries();
  const auto& b = ref.store.entries();
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].name == b[i].name && a[i].value.shape == b[i].value.shape;
  }
  if (!ok) throw std::runtime_error(path.string() + ": tensors do not match the stored config");
  return p;
}

MeshCuboid imitate(const SmootherParams& smoother, const TransferParams& transfer_params,
                   const MeshCuboid& source, const Mesh& identity,
                   std::span<const double> root_weights) {
  const MeshCuboid smoothed = smooth(smoother, source, root_weights);
  std::vector<Points> frames;
  for (int t = 0; t < smoothed.frames(); ++t) {
    frames.push_back(transfer(transfer_params, smoothed.frame(t), identity).vertices);
  }
  return make_cuboid(std::span<const Points>(frames));
}

namespace {

// Hash of every kink the loss passes through: encoder ReLU signs, max-pool
// winners and decoder ReLU signs.
std::uint64_t branch_signature(const TransferParams& params, const TransferPair& pair) {
  const TNet<double> n = load_tnet<double>(params);
  const Encoded<double> e = run_encoder(n, pair.pose);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&](std::uint64_t v) { h = (h ^ v) * 0x100000001b3ULL; };
  for (int a : e.argmax) mix(static_cast<std::uint64_t>(a));
  for (Eigen::Index v = 0; v < e.x.rows(); ++v) {
    const VecS<double> a1 = n.w1 * e.x.row(v).transpose() + n.b1;
    for (Eigen::Index q = 0; q < a1.size(); ++q) mix(a1[q] > 0.0 ? 1 : 2);
  }
  DecodeCache<double> c;
  run_decoder(n, e.z, pair.identity.vertices, box_center(pair.identity.vertices), c);
  for (const auto& a : c.pre)
    for (Eigen::Index q = 0; q < a.size(); ++q) mix(a.data()[q] > 0.0 ? 1 : 2);
  return h;
}

}  // namespace

GradCheckResult transfer_grad_check(const TransferConfig& config, int pose_vertices, int identity_vertices,
                                    int probes, std::uint64_t seed) {
  if (pose_vertices < 1 || identity_vertices < 3) throw std::invalid_argument("grad check meshes too small");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  TransferPair pair;
  pair.pose.resize(pose_vertices, 3);
  for (Eigen::Index i = 0; i < pair.pose.size(); ++i) pair.pose.data()[i] = 0.3 * nd(rng);
  pair.identity.vertices.resize(identity_vertices, 3);
  pair.target.resize(identity_vertices, 3);
  for (Eigen::Index i = 0; i < pair.target.size(); ++i) {
    pair.identity.vertices.data()[i] = 0.3 * nd(rng);
    pair.target.data()[i] = pair.identity.vertices.data()[i] + 0.05 * nd(rng);
  }
  pair.identity.faces.resize(identity_vertices - 2, 3);
  for (int f = 0; f + 2 < identity_vertices; ++f) pair.identity.faces.row(f) << f, f + 1, f + 2;

  TransferParams params = init_transfer(config, seed + 1);
  for (double& v : params.store.value("head.weight").data) v = 0.2 * nd(rng);
  params.store.zero_grad();
  transfer_loss_grad<double>(params, pair, &params.store);
  return grad_check(
      [&](const ParamStore& s) {
        const TransferParams p{params.config, s};
        return transfer_loss_grad<double>(p, pair, nullptr);
      },
      params.store, probes, seed + 2, 1e-4, [&](const ParamStore& s) {
        return branch_signature(TransferParams{params.config, s}, pair);
      });
}

}  // namespace mvai
