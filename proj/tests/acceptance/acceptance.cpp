// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: mvai_acceptance [--only 1,4,7] [--out DIR]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvai/body_model.hpp"
#include "mvai/cuboid.hpp"
#include "mvai/metrics.hpp"
#include "mvai/obj.hpp"
#include "mvai/optim.hpp"
#include "mvai/pose_transfer.hpp"
#include "mvai/runtime.hpp"
#include "mvai/sapd.hpp"
#include "mvai/smoother.hpp"
#include "mvai/synth.hpp"

namespace fs = std::filesystem;
using namespace mvai;

namespace {

// Training budgets for the seed studies. The 200-epoch run is the efficacy
// check; the studies use shorter schedules so the whole suite fits a laptop.
constexpr int kEfficacyEpochs = 200;
constexpr int kMotionStudyEpochs = 60;
constexpr int kKernelStudyEpochs = 20;
constexpr int kLayerStudyEpochs = 20;
const std::vector<std::uint64_t> kStudySeeds{1, 2, 3, 4, 5};

struct Outcome {
  bool ok = false;
  std::string detail;
  double timed_seconds = -1.0;  // when only part of the work is under the limit
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;  // 0 = no limit
  std::function<Outcome()> run;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

fs::path g_out;
fs::path g_bench;

// Shared default benchmark (seed 7, 64/16 clips, T = 16).
const Benchmark& default_benchmark() {
  static const Benchmark bench = [] {
    g_bench = g_out / "benchmark";
    fs::remove_all(g_bench);
    make_benchmark(g_bench, BenchmarkOptions{});
    return load_benchmark(g_bench);
  }();
  return bench;
}

double mean_heldout_mpjpe(const SmootherParams& params, const Benchmark& bench) {
  std::vector<EvalItem> items;
  for (const auto& c : bench.test) items.push_back({c.id, c.video, smooth(params, c.noisy, bench.model), c.joints});
  return evaluate(items, bench.model).overall;
}

// ------------------------------------------------------------ criterion 1

Outcome volume_invariant() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> td(1, 32), nd(10, 700);
  std::normal_distribution<double> g(0.0, 1.0);
  int preserved = 0;
  for (int i = 0; i < 100; ++i) {
    const int T = td(rng), N = nd(rng);
    SmootherConfig cfg;
    if (i % 3 == 1) cfg.geometry.kernel = {5, 3, 3}, cfg.geometry.padding = {2, 1, 1};
    if (i % 3 == 2) cfg.geometry.kernel = {3, 1, 1}, cfg.geometry.padding = {1, 0, 0};
    cfg.layers = 1 + i % 8;
    SmootherParams p = init_smoother(cfg, i);
    for (auto& e : p.store.entries())
      for (double& v : e.value.data) v += 0.05 * g(rng);
    MeshCuboid x = MeshCuboid::zeros(T, N);
    for (float& v : x.data()) v = static_cast<float>(g(rng));
    std::vector<double> root(N);
    for (double& w : root) w = std::abs(g(rng)) + 0.01;
    const double total = std::accumulate(root.begin(), root.end(), 0.0);
    for (double& w : root) w /= total;
    const MeshCuboid y = smooth(p, x, root);
    if (y.frames() == T && y.points() == N && y.data().size() == x.data().size()) ++preserved;
  }
  return {preserved == 100, std::to_string(preserved) + "/100 random cuboids keep T x N x 3"};
}

// ------------------------------------------------------------ criterion 2

double j3d_oracle(const JointSeq& p, const JointSeq& g, bool squared) {
  double acc = 0.0;
  for (int t = 0; t < p.frames(); ++t)
    for (int i = 0; i < p.points(); ++i) {
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) sq += std::pow(double(p.at(t, i, c)) - double(g.at(t, i, c)), 2);
      acc += squared ? sq : std::sqrt(sq);
    }
  return acc / p.frames();
}

double motion_oracle(const JointSeq& p, const JointSeq& g, bool squared) {
  double acc = 0.0;
  for (int t = 1; t < p.frames(); ++t)
    for (int i = 0; i < p.points(); ++i) {
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = (double(p.at(t, i, c)) - p.at(t - 1, i, c)) - (double(g.at(t, i, c)) - g.at(t - 1, i, c));
        sq += d * d;
      }
      acc += squared ? sq : std::sqrt(sq);
    }
  return acc / p.frames();
}

Outcome loss_oracles() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> td(2, 12), kd(1, 24);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_int_distribution<int> dy(-2048, 2048);
  const auto random = [&](int T, int k) {
    JointSeq s = JointSeq::zeros(T, k);
    for (float& v : s.data()) v = g(rng);
    return s;
  };
  double worst = 0.0;
  bool offset_exact = true;
  for (int i = 0; i < 50; ++i) {
    const int T = td(rng), k = kd(rng);
    const JointSeq p = random(T, k), q = random(T, k);
    for (bool sq : {false, true}) {
      const LossNorm n = sq ? LossNorm::kSquaredL2 : LossNorm::kL2;
      worst = std::max(worst, std::abs(j3d_loss(p, q, n) - j3d_oracle(p, q, sq)));
      worst = std::max(worst, std::abs(motion_loss(p, q, n) - motion_oracle(p, q, sq)));
    }
    // Per-joint constant offsets on dyadic data leave the motion loss unchanged bit for bit.
    JointSeq a = JointSeq::zeros(T, k), b = JointSeq::zeros(T, k);
    for (float& v : a.data()) v = dy(rng) / 1024.0f;
    for (float& v : b.data()) v = dy(rng) / 1024.0f;
    JointSeq shifted = a;
    for (int j = 0; j < k; ++j) {
      const float off[3] = {dy(rng) / 1024.0f, dy(rng) / 1024.0f, dy(rng) / 1024.0f};
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < 3; ++c) shifted.at(t, j, c) += off[c];
    }
    for (LossNorm n : {LossNorm::kL2, LossNorm::kSquaredL2}) {
      offset_exact = offset_exact && motion_loss(shifted, b, n) == motion_loss(a, b, n);
    }
  }
  JointSeq gt = JointSeq::zeros(1, 2), pred = JointSeq::zeros(1, 2);
  pred.at(0, 0, 0) = 3.0f;
  pred.at(0, 0, 1) = 4.0f;
  JointSeq g2 = JointSeq::zeros(2, 1), p2 = JointSeq::zeros(2, 1);
  g2.at(1, 0, 0) = 1.0f;
  p2.at(1, 0, 0) = 2.0f;
  const bool hand = j3d_loss(pred, gt) == 5.0 && motion_loss(p2, g2) == 0.5;
  const bool ok = worst < 1e-10 && offset_exact && hand;
  return {ok, "max oracle deviation " + fmt("%.2e", worst) + ", offset invariance " +
                  (offset_exact ? "exact" : "broken") + ", hand cases " + (hand ? "5.0 and 0.5" : "wrong")};
}

// ------------------------------------------------------------ criterion 3

Outcome gradient_suite() {
  double sm = 0.0, tr = 0.0;
  int probes = 0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GradCheckResult a = smoother_grad_check({}, 4, 20, 20, seed);
    const GradCheckResult b = transfer_grad_check({}, 40, 30, 20, seed);
    sm = std::max(sm, a.max_relative_error);
    tr = std::max(tr, b.max_relative_error);
    probes += std::min(a.probes, b.probes);
    ok = ok && a.probes >= 20 && b.probes >= 20;
  }
  ok = ok && sm < 1e-4 && tr < 1e-4;
  return {ok, "max relative error smoother " + fmt("%.2e", sm) + ", transfer " + fmt("%.2e", tr) + " (" +
                  std::to_string(probes / 5) + "+ probes x 5 seeds each)"};
}

// ------------------------------------------------------------ criterion 4

Outcome smoothing_efficacy() {
  const Benchmark& bench = default_benchmark();
  SmootherTrainConfig tc;
  tc.epochs = kEfficacyEpochs;
  const auto train = smoother_clips(bench.train);
  const Clock::time_point t0 = Clock::now();
  const SmootherTrainResult r = train_smoother(SmootherConfig{}, bench.model.joint_regressor(), train, {}, tc);
  const double train_s = seconds_since(t0);
  const double after = mean_heldout_mpjpe(r.params, bench);
  const double before = bench.reference_input_mpjpe_mm;
  const double reduction = 1.0 - after / before;
  save_smoother(g_out / "efficacy_smoother.mprm", r.params, {{"epochs", tc.epochs}});
  return {!r.diverged && reduction >= 0.20,
          "held-out MPJPE " + fmt("%.2f", before) + " -> " + fmt("%.2f", after) + " mm (" +
              fmt("%.1f", 100.0 * reduction) + "% reduction, need 20%); 200-epoch training took " +
              fmt("%.1f", train_s) + " s",
          train_s};
}

// ------------------------------------------------------------ studies

AblationTable run_study(AblationStudy study, const Benchmark& bench, int epochs) {
  SmootherTrainConfig tc;
  tc.epochs = epochs;
  AblationTable t = ablate(bench, study_variants(study, SmootherConfig{}, tc), kStudySeeds,
                           [](const std::string& s) { std::cerr << "  " << s << "\n"; });
  t.title = study_title(study);
  return t;
}

void save_table(const AblationTable& t, const std::string& stem) {
  write_text(g_out / (stem + ".txt"), ablation_text(t));
  write_text(g_out / (stem + ".csv"), ablation_csv(t));
  write_text(g_out / (stem + ".json"), ablation_json(t).dump(2) + "\n");
  std::cout << ablation_text(t);
}

std::string per_seed(const AblationRow& a, const AblationRow& b) {
  std::string s;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    s += (i ? ", " : "") + fmt("%.1f", a.cells[i].mpjpe_mm) + "/" + fmt("%.1f", b.cells[i].mpjpe_mm);
  }
  return s;
}

Outcome motion_ablation() {
  const AblationTable t = run_study(AblationStudy::kMotionLoss, default_benchmark(), kMotionStudyEpochs);
  save_table(t, "ablation_motion_loss");
  const int n = seeds_not_worse(t.rows[0], t.rows[1]);
  return {n >= 4, "with <= without motion loss in " + std::to_string(n) + "/5 seeds (" +
                      std::to_string(kMotionStudyEpochs) + " epochs; with/without mm: " + per_seed(t.rows[0], t.rows[1]) +
                      ")"};
}

Outcome kernel_ablation() {
  const Benchmark shuffled = shuffle_vertices(default_benchmark(), 1);
  const AblationTable kernels = run_study(AblationStudy::kKernel, shuffled, kKernelStudyEpochs);
  save_table(kernels, "ablation_kernel");
  const AblationTable layers = run_study(AblationStudy::kLayers, default_benchmark(), kLayerStudyEpochs);
  save_table(layers, "ablation_layers");
  // Row 1 is 5x3x3, row 0 is 5x1x3: the mixing kernel must not come out ahead.
  const int n = seeds_not_worse(kernels.rows[0], kernels.rows[1]);
  return {n >= 4, "5x3x3 does not beat 5x1x3 on shuffled vertices in " + std::to_string(n) + "/5 seeds (" +
                      std::to_string(kKernelStudyEpochs) + " epochs; 5x1x3/5x3x3 mm: " +
                      per_seed(kernels.rows[0], kernels.rows[1]) + "); kernel and layer tables written"};
}

// ------------------------------------------------------------ criterion 7

Outcome sapd_geometry() {
  const BodyModel model = make_humanoid();
  double len_err = 0.0, dir_err = 0.0, ortho = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto skel = [&](std::uint64_t seed, double spread) {
      const PoseParams p = motion_pose(random_motion(model.num_joints(), seed), 13.0 * seed);
      return skeleton_of(model, pose_mesh(model, random_shape(model.num_shape_coeffs(), seed + 7, spread), p).vertices);
    };
    const Skeleton pose = skel(s, 1.0), identity = skel(s + 100, 2.0);
    const Skeleton aligned = align_skeleton(pose, identity);
    for (int c = 1; c < pose.num_joints(); ++c) {
      const int p = pose.parents[c];
      const Eigen::Vector3d da = aligned.joints.row(c) - aligned.joints.row(p);
      const Eigen::Vector3d dp = pose.joints.row(c) - pose.joints.row(p);
      const double li = (identity.joints.row(c) - identity.joints.row(p)).norm();
      len_err = std::max(len_err, std::abs(da.norm() - li));
      dir_err = std::max(dir_err, (da.normalized() - dp.normalized()).norm());
    }
    const BoneTransforms bt = bone_transforms(identity, aligned);
    for (const Eigen::Matrix3d& r : bt.rotations) {
      ortho = std::max(ortho, (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
      ortho = std::max(ortho, std::abs(r.determinant() - 1.0));
    }
  }

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Points v(200, 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = g(rng);
  const Skeleton rest = skeleton_of(model, model.template_vertices());
  const Eigen::MatrixXd w = bind_weights(v, rest);
  const BoneTransforms id{std::vector<Eigen::Matrix3d>(rest.num_joints(), Eigen::Matrix3d::Identity()),
                          std::vector<Eigen::Vector3d>(rest.num_joints(), Eigen::Vector3d::Zero())};
  const bool deform_exact = (deform(v, w, id) - v).cwiseAbs().maxCoeff() == 0.0;

  const std::vector<double> thickness{0.0, 0.02, 0.04, 0.06, 0.08, 0.10};
  int increasing = 0;
  std::string shown;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto profile = sapd_distance_profile(model, seed, thickness, 20);
    if (strictly_increasing(profile)) ++increasing;
    if (seed == 1) {
      for (const auto& pt : profile) {
        shown += (shown.empty() ? "" : ", ") + fmt("%.0f", 1000 * pt.mean_distance) + "->" +
                 fmt("%.1f", 1000 * pt.mean_error);
      }
    }
  }
  const bool ok = len_err <= 1e-6 && dir_err <= 1e-6 && ortho <= 1e-9 && deform_exact && increasing == 5;
  return {ok, "bone length " + fmt("%.1e", len_err) + ", direction " + fmt("%.1e", dir_err) + ", orthonormality " +
                  fmt("%.1e", ortho) + ", identity deform " + (deform_exact ? "exact" : "inexact") +
                  "; SA-PD error rises with skeleton distance in " + std::to_string(increasing) +
                  "/5 clothed bodies (seed 1, mm distance->error: " + shown + ")"};
}

// ------------------------------------------------------------ criterion 8

Outcome transfer_contracts() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> nd(1, 900);
  std::normal_distribution<double> g(0.0, 0.5);
  const auto random_points = [&](int n) {
    Points p(n, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
    return p;
  };
  const TransferParams fresh = init_transfer({}, 3);
  int counts = 0;
  bool invariant = true;
  for (int i = 0; i < 50; ++i) {
    const int np = nd(rng), ni = 3 + nd(rng);
    Mesh identity{random_points(ni), Faces(ni - 2, 3)};
    for (int f = 0; f < ni - 2; ++f) identity.faces.row(f) << f, f + 1, f + 2;
    const Points pose = random_points(np);
    if (transfer(fresh, pose, identity).vertices.rows() == ni) ++counts;
    std::vector<int> perm(np);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points shuffled(np, 3);
    for (int r = 0; r < np; ++r) shuffled.row(r) = pose.row(perm[r]);
    invariant = invariant && (encode_pose(fresh, shuffled).array() == encode_pose(fresh, pose).array()).all();
  }

  const BodyModel model = make_humanoid();
  const std::vector<TransferPair> train = make_transfer_pairs(model, 8, 100, 1);
  const std::vector<TransferPair> held = make_transfer_pairs(model, 4, 10, 2);
  const Clock::time_point t0 = Clock::now();
  const TransferTrainResult r = train_transfer({}, train, {}, TransferTrainConfig{});
  const double train_s = seconds_since(t0);
  double copy = 0.0, got = 0.0;
  for (const auto& p : held) {
    copy += mean_vertex_error(p.identity.vertices, p.target);
    got += mean_vertex_error(transfer(r.params, p.pose, p.identity).vertices, p.target);
  }
  copy /= held.size();
  got /= held.size();
  save_transfer(g_out / "transfer.mprm", r.params, {{"identities", 8}, {"poses", 100}});
  const bool ok = counts == 50 && invariant && !r.diverged && got < copy;
  return {ok,
          std::to_string(counts) + "/50 outputs match the identity vertex count, latent permutation invariance " +
              (invariant ? "exact" : "broken") + "; held-out error " + fmt("%.1f", 1000 * got) +
              " mm vs copy-identity " + fmt("%.1f", 1000 * copy) + " mm; 8x100 training took " +
              fmt("%.1f", train_s) + " s",
          train_s};
}

// ------------------------------------------------------------ criterion 9

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MVAI_CLI) + " -q " + args + " > " + (g_out / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::set<fs::path> files;
  for (const fs::path& root : {a, b})
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
  for (const auto& f : files) {
    if (!fs::exists(a / f) || !fs::exists(b / f) || slurp(a / f) != slurp(b / f)) return false;
  }
  return !files.empty();
}

Outcome determinism() {
  std::vector<std::string> broken;
  const fs::path dir = g_out / "roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 rng(909);
  std::normal_distribution<float> g(0.0f, 1.0f);

  MeshCuboid c = MeshCuboid::zeros(7, 33);
  for (float& v : c.data()) v = g(rng);
  write_cuboid(dir / "c.mcub", c);
  if (!(read_cuboid(dir / "c.mcub") == c)) broken.push_back("MCUB");
  JointSeq j = JointSeq::zeros(5, 24);
  for (float& v : j.data()) v = g(rng);
  write_joints(dir / "j.mjnt", j);
  if (!(read_joints(dir / "j.mjnt") == j)) broken.push_back("MJNT");

  const BodyModel model = make_humanoid();
  save_body_model(dir / "m.mbdy", model);
  save_body_model(dir / "m2.mbdy", load_body_model(dir / "m.mbdy"));
  if (slurp(dir / "m.mbdy") != slurp(dir / "m2.mbdy")) broken.push_back("MBDY");

  const ParamStore p = round_to_checkpoint_precision(init_transfer({}, 4).store);
  save_params(dir / "p.mprm", p);
  const ParamStore back = load_params(dir / "p.mprm");
  bool params_ok = back.entries().size() == p.entries().size();
  for (std::size_t i = 0; params_ok && i < p.entries().size(); ++i) {
    params_ok = back.entries()[i].name == p.entries()[i].name && back.entries()[i].value == p.entries()[i].value;
  }
  if (!params_ok) broken.push_back("MPRM");

  const Mesh body = shape_mesh(model, random_shape(model.num_shape_coeffs(), 5));
  write_obj(dir / "m.obj", body);
  const Mesh ob = read_obj(dir / "m.obj");
  if (!(ob.faces == body.faces) || (ob.vertices - body.vertices).cwiseAbs().maxCoeff() != 0.0) broken.push_back("OBJ");

  // Every command twice with the same flags.
  const std::string root = (g_out / "cli").string();
  fs::remove_all(root);
  const std::string bench = root + "/bench";
  const std::string small = " --train-clips 4 --test-clips 2 --T 4 --clips-per-video 2 --seed 3";
  const std::string clip = bench + "/clips/test_000.noisy.mcub";
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "gen-data" + small + " --out "},
      {"train-smoother", "train-smoother --data " + bench + " --epochs 2 --T 4 --layers 3 --seed 2 --out "},
      {"train-transfer",
       "train-transfer --epochs 1 --identities 2 --poses 2 --heldout-identities 2 --heldout-poses 1 --out "},
      {"smooth", "smooth --smoother " + root + "/train-smoother.a/smoother.mprm --input " + clip + " --out "},
      {"export-obj", "export-obj --input " + bench + "/clips/test_000.gt.mcub --out "},
      {"transfer", "transfer --transfer " + root + "/train-transfer.a/transfer.mprm --pose " + clip +
                       " --identity " + root + "/export-obj.a/frame_0001.obj --out "},
      {"imitate", "imitate --source " + clip + " --identity " + root + "/export-obj.a/frame_0002.obj --smoother " +
                      root + "/train-smoother.a/smoother.mprm --transfer " + root +
                      "/train-transfer.a/transfer.mprm --out "},
      {"imitate-sapd",
       "imitate --baseline sapd --source " + clip + " --identity " + root + "/export-obj.a/frame_0000.obj --out "},
      {"evaluate", "evaluate --data " + bench + " --smoother " + root + "/train-smoother.a/smoother.mprm --out "},
      {"ablate", "ablate --data " + bench + " --study motion-loss --seeds 2 --epochs 1 --out "},
      {"gradcheck", "gradcheck --probes 20 --seeds 1 --out "},
  };
  int reproduced = 0;
  for (const auto& [name, args] : commands) {
    const std::string a = root + "/" + name + ".a", b = root + "/" + name + ".b";
    const bool ran = run_cli(args + a) == 0 && run_cli(args + b) == 0;
    if (name == "gen-data" && ran) fs::copy(a, bench, fs::copy_options::recursive);
    if (ran && same_tree(a, b)) {
      ++reproduced;
    } else {
      broken.push_back(name + (ran ? " output differs" : " failed"));
    }
  }
  std::string detail = "MCUB, MJNT, MBDY, MPRM and OBJ round trips; " + std::to_string(reproduced) + "/" +
                       std::to_string(commands.size()) + " commands byte-identical on rerun";
  for (const auto& b : broken) detail += "; broken: " + b;
  return {broken.empty(), detail};
}

std::set<int> parse_only(const std::string& list) {
  std::set<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  std::set<int> only;
  g_out = fs::current_path() / "acceptance_out";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = parse_only(argv[++i]);
    } else if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else {
      std::cerr << "usage: " << argv[0] << " [--only 1,2,...] [--out DIR]\n";
      return 2;
    }
  }
  fs::create_directories(g_out);

  const std::vector<Criterion> criteria{
      {1, "smoother preserves cuboid shape", 10, volume_invariant},
      {2, "loss functions match oracles", 5, loss_oracles},
      {3, "analytic gradients match finite differences", 120, gradient_suite},
      {4, "trained smoother reduces held-out MPJPE", 300, smoothing_efficacy},
      {5, "motion loss does not hurt", 1800, motion_ablation},
      {6, "vertex-mixing kernel does not help on shuffled vertices", 0, kernel_ablation},
      {7, "skeleton alignment, skinning and SA-PD error profile", 60, sapd_geometry},
      {8, "pose transfer contracts and copy-identity margin", 600, transfer_contracts},
      {9, "determinism and file round trips", 60, determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::cerr << "criterion " << c.id << ": " << c.name << "\n";
    const Clock::time_point t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double total = seconds_since(t0);
    const double timed = o.timed_seconds >= 0.0 ? o.timed_seconds : total;
    const bool in_time = c.limit_seconds <= 0.0 || timed <= c.limit_seconds;
    const bool pass = o.ok && in_time;
    if (!pass) ++failed;
    std::string when = fmt("%.1f s", total);
    if (c.limit_seconds > 0.0) {
      when += o.timed_seconds >= 0.0 ? ", timed part " + fmt("%.1f s", timed) : std::string();
      when += " of " + fmt("%.0f s", c.limit_seconds) + (in_time ? "" : " LIMIT EXCEEDED");
    }
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << ": " << c.name << ": " << o.detail
              << " [" << when << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
