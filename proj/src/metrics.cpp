#include "mvai/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mvai/geometry.hpp"
#include "mvai/sapd.hpp"
#include "mvai/synth.hpp"

namespace mvai {

double mpjpe(const JointSeq& pred, const JointSeq& gt, bool align_root) {
  if (pred.frames() != gt.frames() || pred.points() != gt.points()) {
    throw std::invalid_argument("mpjpe: shapes differ (" + std::to_string(pred.frames()) + "x" +
                                std::to_string(pred.points()) + " vs " + std::to_string(gt.frames()) +
                                "x" + std::to_string(gt.points()) + ")");
  }
  const int T = pred.frames(), k = pred.points();
  double sum = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        double d = double(pred.at(t, j, c)) - gt.at(t, j, c);
        if (align_root) d -= double(pred.at(t, 0, c)) - gt.at(t, 0, c);
        d2 += d * d;
      }
      sum += std::sqrt(d2);
    }
  }
  return 1000.0 * sum / (static_cast<double>(T) * k);
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : r.clips) {
    clips.push_back({{"clip", c.clip_id}, {"video", c.video_id}, {"mpjpe_mm", c.mpjpe_mm}});
  }
  j = {{"overall_mpjpe_mm", r.overall}, {"per_video_mpjpe_mm", r.per_video},
       {"clips", clips},                {"align_root", r.align_root},
       {"fingerprint", r.fingerprint},  {"seed", r.seed}};
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

EvalReport evaluate(const std::vector<EvalItem>& items, const BodyModel& model, bool align_root) {
  EvalReport r;
  r.align_root = align_root;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::map<std::string, std::pair<double, int>> videos;
  double total = 0.0;
  for (const auto& it : items) {
    const JointSeq pred = regress_sequence(model.joint_regressor(), it.prediction);
    const double e = mpjpe(pred, it.target, align_root);
    r.clips.push_back({it.clip_id, it.video_id, e});
    auto& v = videos[it.video_id];
    v.first += e;
    v.second += 1;
    total += e;
    h = fnv1a(h, it.clip_id.data(), it.clip_id.size());
    h = fnv1a(h, it.prediction.data().data(), it.prediction.data().size_bytes());
    h = fnv1a(h, it.target.data().data(), it.target.data().size_bytes());
  }
  for (const auto& [name, v] : videos) r.per_video[name] = v.first / v.second;
  r.overall = items.empty() ? 0.0 : total / items.size();
  r.fingerprint = hex(h);
  return r;
}

Benchmark load_benchmark(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw std::runtime_error("no manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(f);
  if (manifest.value("format", "") != "mvai-benchmark") {
    throw std::runtime_error(dir.string() + "/manifest.json is not a benchmark manifest");
  }
  Benchmark b{dir, manifest, load_body_model(dir / manifest.at("model").get<std::string>()), {}, {},
              manifest.value("reference_input_mpjpe_mm", 0.0)};
  for (const char* split : {"train", "test"}) {
    auto& out = std::string(split) == "train" ? b.train : b.test;
    for (const auto& entry : manifest.at("splits").at(split)) {
      const ClipManifest cm = entry.get<ClipManifest>();
      cm.validate(dir);
      BenchmarkClip clip{entry.at("id").get<std::string>(), cm.source_id, read_cuboid(dir / cm.cuboid),
                         read_joints(dir / cm.joints)};
      if (clip.noisy.points() != b.model.num_vertices() || clip.joints.points() != b.model.num_joints() ||
          clip.joints.frames() != clip.noisy.frames()) {
        throw std::runtime_error("clip " + clip.id + " does not match the benchmark model");
      }
      out.push_back(std::move(clip));
    }
  }
  return b;
}

std::vector<SmootherClip> smoother_clips(const std::vector<BenchmarkClip>& clips) {
  std::vector<SmootherClip> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back({c.noisy, c.joints});
  return out;
}

Benchmark shuffle_vertices(const Benchmark& bench, std::uint64_t seed) {
  const BodyModel& m = bench.model;
  const int n = m.num_vertices();
  std::vector<int> perm(n);  // new index i holds old vertex perm[i]
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> inv(n);
  for (int i = 0; i < n; ++i) inv[perm[i]] = i;

  Points tmpl(n, 3);
  Eigen::MatrixXd skin(n, m.num_joints()), reg(m.num_joints(), n);
  std::vector<Points> basis(m.shape_basis().size(), Points(n, 3));
  for (int i = 0; i < n; ++i) {
    tmpl.row(i) = m.template_vertices().row(perm[i]);
    skin.row(i) = m.skinning_weights().row(perm[i]);
    reg.col(i) = m.joint_regressor().col(perm[i]);
    for (std::size_t s = 0; s < basis.size(); ++s) basis[s].row(i) = m.shape_basis()[s].row(perm[i]);
  }
  Faces faces = m.faces();
  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) faces(f, c) = inv[faces(f, c)];

  Benchmark out{bench.dir, bench.manifest,
                BodyModel(tmpl, faces, basis, skin, reg, m.parents()), {}, {},
                bench.reference_input_mpjpe_mm};
  const auto permute = [&](const MeshCuboid& c) {
    MeshCuboid p = MeshCuboid::zeros(c.frames(), n);
    for (int t = 0; t < c.frames(); ++t)
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) p.at(t, i, a) = c.at(t, perm[i], a);
    return p;
  };
  for (const auto& c : bench.train) out.train.push_back({c.id, c.video, permute(c.noisy), c.joints});
  for (const auto& c : bench.test) out.test.push_back({c.id, c.video, permute(c.noisy), c.joints});
  return out;
}

AblationTable ablate(const Benchmark& bench, const std::vector<AblationVariant>& variants,
                     const std::vector<std::uint64_t>& seeds,
                     const std::function<void(const std::string&)>& progress) {
  AblationTable table;
  table.input_mpjpe_mm = bench.reference_input_mpjpe_mm;
  const std::vector<SmootherClip> train = smoother_clips(bench.train);
  const std::vector<SmootherClip> test = smoother_clips(bench.test);
  const Eigen::MatrixXd& reg = bench.model.joint_regressor();
  for (const auto& variant : variants) {
    AblationRow row{variant.name, {}, 0.0, 0.0};
    const SmootherObjective<float> held(variant.config, reg, test, variant.train.loss);
    for (std::uint64_t seed : seeds) {
      SmootherTrainConfig tc = variant.train;
      tc.seed = seed;
      AblationCell cell{seed, 0.0, false};
      try {
        const SmootherTrainResult r = train_smoother(variant.config, reg, train, {}, tc);
        cell.diverged = r.diverged;
        double m = 0.0;
        for (int i = 0; i < held.size(); ++i) m += mpjpe(held.predict_joints(r.params.store, i), test[i].target);
        cell.mpjpe_mm = m / held.size();
      } catch (const std::runtime_error&) {
        cell.diverged = true;
        cell.mpjpe_mm = std::numeric_limits<double>::quiet_NaN();
      }
      row.cells.push_back(cell);
      if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s seed %llu: %.2f mm%s", variant.name.c_str(),
                      static_cast<unsigned long long>(seed), cell.mpjpe_mm,
                      cell.diverged ? " (diverged)" : "");
        progress(buf);
      }
    }
    double s = 0.0;
    for (const auto& c : row.cells) s += c.mpjpe_mm;
    row.mean = s / row.cells.size();
    double v = 0.0;
    for (const auto& c : row.cells) v += (c.mpjpe_mm - row.mean) * (c.mpjpe_mm - row.mean);
    row.stddev = row.cells.size() > 1 ? std::sqrt(v / (row.cells.size() - 1)) : 0.0;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<AblationVariant> study_variants(AblationStudy study, const SmootherConfig& base,
                                            const SmootherTrainConfig& train) {
  std::vector<AblationVariant> out;
  switch (study) {
    case AblationStudy::kMotionLoss: {
      SmootherTrainConfig without = train;
      without.loss.motion_loss = false;
      out = {{"with motion loss", base, train}, {"without motion loss", base, without}};
      break;
    }
    case AblationStudy::kKernel:
      for (const std::array<int, 3> k : {std::array{5, 1, 3}, {5, 3, 3}, {3, 1, 3}, {5, 1, 1}}) {
        SmootherConfig c = base;
        c.geometry.kernel = k;
        for (int a = 0; a < 3; ++a) c.geometry.padding[a] = (k[a] - 1) / 2;
        out.push_back({"kernel " + std::to_string(k[0]) + "x" + std::to_string(k[1]) + "x" + std::to_string(k[2]),
                       c, train});
      }
      break;
    case AblationStudy::kLayers:
      for (int layers : {3, 8, 12}) {
        SmootherConfig c = base;
        c.layers = layers;
        SmootherTrainConfig t = train;
        if (layers == 12) t.epochs *= 2;
        out.push_back({std::to_string(layers) + " layers (" + std::to_string(t.epochs) + " epochs)", c, t});
      }
      break;
  }
  return out;
}

std::string study_title(AblationStudy study) {
  switch (study) {
    case AblationStudy::kMotionLoss: return "Ablation of the motion loss";
    case AblationStudy::kKernel: return "Ablation of the kernel size (vertex order shuffled)";
    case AblationStudy::kLayers: return "Ablation of the layer count";
  }
  return {};
}

int seeds_not_worse(const AblationRow& a, const AblationRow& b) {
  if (a.cells.size() != b.cells.size()) throw std::invalid_argument("rows cover different seeds");
  int n = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    if (a.cells[i].mpjpe_mm <= b.cells[i].mpjpe_mm) ++n;
  }
  return n;
}

nlohmann::json ablation_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
      cells.push_back({{"seed", c.seed},
                       {"mpjpe_mm", std::isfinite(c.mpjpe_mm) ? nlohmann::json(c.mpjpe_mm) : nlohmann::json()},
                       {"diverged", c.diverged}});
    }
    rows.push_back({{"variant", r.name}, {"mean_mpjpe_mm", r.mean}, {"std_mpjpe_mm", r.stddev}, {"runs", cells}});
  }
  return {{"title", t.title}, {"input_mpjpe_mm", t.input_mpjpe_mm}, {"rows", rows}};
}

std::string ablation_text(const AblationTable& t) {
  std::size_t w = 24;
  for (const auto& r : t.rows) w = std::max(w, r.name.size() + 2);
  std::ostringstream os;
  char buf[256];
  os << t.title << "\n";
  std::snprintf(buf, sizeof buf, "%-*s| %s\n", static_cast<int>(w), "", "MPJPE (mm), mean +- std over seeds");
  os << buf << std::string(w, '-') << "+" << std::string(40, '-') << "\n";
  std::snprintf(buf, sizeof buf, "%-*s| %.1f\n", static_cast<int>(w), "noisy input", t.input_mpjpe_mm);
  os << buf;
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%-*s| %.1f +- %.1f  [", static_cast<int>(w), r.name.c_str(), r.mean, r.stddev);
    os << buf;
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.1f%s", i ? ", " : "", r.cells[i].mpjpe_mm, r.cells[i].diverged ? "*" : "");
      os << buf;
    }
    os << "]\n";
  }
  return os.str();
}

std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os << "variant,seed,mpjpe_mm,diverged\n";
  char buf[64];
  for (const auto& r : t.rows)
    for (const auto& c : r.cells) {
      std::snprintf(buf, sizeof buf, "%.6f", c.mpjpe_mm);
      os << r.name << "," << c.seed << "," << buf << "," << (c.diverged ? 1 : 0) << "\n";
    }
  return os.str();
}

std::vector<ProfilePoint> sapd_distance_profile(const BodyModel& model, std::uint64_t seed,
                                                const std::vector<double>& thicknesses, int frames) {
  if (frames <= 0) throw std::invalid_argument("sapd_distance_profile: frames must be positive");
  const ShapeParams shape = random_shape(model.num_shape_coeffs(), derive_seed(seed, 1));
  const MotionSpec motion = random_motion(model.num_joints(), derive_seed(seed, 2));
  std::vector<PoseParams> poses;
  std::vector<Skeleton> skeletons;
  for (int f = 0; f < frames; ++f) {
    PoseParams p = motion_pose(motion, 50.0 * f);
    p.translation.setZero();  // SA-PD never sees the root offset of the source
    skeletons.push_back(skeleton_of(model, pose_mesh(model, shape, p).vertices));
    poses.push_back(std::move(p));
  }
  std::vector<ProfilePoint> out;
  for (double th : thicknesses) {
    const ClothedIdentity cl = make_clothed_identity(model, shape, ClothOptions{th, th, th, th});
    const Points& rest = cl.mesh.vertices;
    const Eigen::MatrixXd w = bind_weights(rest, cl.skeleton);
    ProfilePoint pt;
    pt.thickness = th;
    pt.mean_distance = distance_to_skeleton(rest, cl.skeleton.joints, cl.skeleton.parents).mean();
    for (int f = 0; f < frames; ++f) {
      const Points gt = pose_clothed(model, cl, poses[f]);
      const Points got = deform(rest, w, bone_transforms(cl.skeleton, align_skeleton(skeletons[f], cl.skeleton)));
      pt.mean_error += (got - gt).rowwise().norm().mean();
    }
    pt.mean_error /= frames;
    out.push_back(pt);
  }
  return out;
}

bool strictly_increasing(const std::vector<ProfilePoint>& profile) {
  for (std::size_t i = 1; i < profile.size(); ++i) {
    if (!(profile[i].mean_distance > profile[i - 1].mean_distance)) return false;
    if (!(profile[i].mean_error > profile[i - 1].mean_error)) return false;
  }
  return true;
}

}  // namespace mvai
