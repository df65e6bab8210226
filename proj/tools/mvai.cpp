#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
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
using nlohmann::json;
using namespace mvai;

namespace {

constexpr const char* kVersion = MVAI_VERSION;
constexpr double kGradTolerance = 1e-4;

// Bad flag combinations or config contents; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool quiet = false;

void say(const std::string& line) {
  if (!quiet) std::cerr << line << '\n';
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

// Rejects config keys that the command does not know.
void check_schema(const json& given, const json& schema, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!schema.contains(key)) throw UsageError("unknown config key " + where + key);
    if (schema.at(key).is_object()) check_schema(value, schema.at(key), where + key + ".");
  }
}

// Flags bound to JSON pointers of a command's config document. Only flags
// that appear on the command line override the document.
class ConfigFlags {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& names, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(names, *value, help);
    setters_.push_back([opt, value, pointer](json& doc) {
      if (opt->count() > 0) doc[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }
  CLI::Option* add_flag(CLI::App* app, const std::string& names, const std::string& pointer,
                        const std::string& help) {
    auto value = std::make_shared<bool>();
    CLI::Option* opt = app->add_flag(names, *value, help);
    setters_.push_back([opt, value, pointer](json& doc) {
      if (opt->count() > 0) doc[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }
  void apply(json& doc) const {
    for (const auto& s : setters_) s(doc);
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

// Config document for one invocation: defaults, then --config, then flags.
struct Command {
  CLI::App* app = nullptr;
  ConfigFlags flags;
  std::string config_path;
  json defaults;

  json resolve() const {
    json doc = defaults;
    if (!config_path.empty()) {
      const json file = read_json(config_path);
      check_schema(file, defaults, "");
      doc.merge_patch(file);
    }
    flags.apply(doc);
    return doc;
  }
};

void write_run(const fs::path& dir, const std::string& command, const json& config, const json& inputs = {}) {
  json run = {{"command", command}, {"version", kVersion}, {"config", config}};
  if (config.contains("seed")) run["seed"] = config.at("seed");
  if (!inputs.is_null()) run["inputs"] = inputs;
  write_json(dir / "run.json", run);
}

fs::path make_out_dir(const std::string& out) {
  const fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

BodyModel body_model_from(const std::string& path) {
  return path.empty() ? make_humanoid() : load_body_model(path);
}

std::span<const double> span_of(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"epsilon", a.epsilon},
          {"weight_decay", a.weight_decay},
          {"clip_grad_norm", a.clip_grad_norm}};
}

AdamConfig adam_from(const json& j) {
  AdamConfig a;
  a.lr = j.at("lr");
  a.beta1 = j.at("beta1");
  a.beta2 = j.at("beta2");
  a.epsilon = j.at("epsilon");
  a.weight_decay = j.at("weight_decay");
  a.clip_grad_norm = j.at("clip_grad_norm");
  return a;
}

LossNorm norm_from(const std::string& s) {
  if (s == "l2") return LossNorm::kL2;
  if (s == "squared_l2") return LossNorm::kSquaredL2;
  throw UsageError("loss norm must be l2 or squared_l2, got '" + s + "'");
}

// Volume-preserving padding for a kernel.
json padding_for(const json& kernel) {
  json p = json::array();
  for (const auto& k : kernel) p.push_back((k.get<int>() - 1) / 2);
  return p;
}

template <class F>
auto usage_guard(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------- gen-data

struct GenData : Command {
  std::string out;

  explicit GenData(CLI::App& root) {
    app = root.add_subcommand("gen-data", "Generate the synthetic benchmark");
    const BenchmarkOptions d;
    defaults = {{"seed", d.seed},
                {"train_clips", d.train_clips},
                {"test_clips", d.test_clips},
                {"T", d.clip_length},
                {"stride", d.stride},
                {"train_subjects", d.train_subjects},
                {"test_subjects", d.test_subjects},
                {"clips_per_train_video", d.clips_per_train_video},
                {"noise", d.noise},
                {"motion", d.motion}};
    app->add_option("--out", out, "Benchmark directory")->required();
    app->add_option("--config", config_path, "JSON config merged under the flags");
    flags.add<std::uint64_t>(app, "--seed", "/seed", "Benchmark seed");
    flags.add<int>(app, "--train-clips", "/train_clips", "Training clips");
    flags.add<int>(app, "--test-clips", "/test_clips", "Test clips");
    flags.add<int>(app, "--T", "/T", "Frames per clip");
    flags.add<int>(app, "--stride", "/stride", "Keep every n-th source frame");
    flags.add<int>(app, "--train-subjects", "/train_subjects", "Training body shapes");
    flags.add<int>(app, "--test-subjects", "/test_subjects", "Test body shapes");
    flags.add<int>(app, "--clips-per-video", "/clips_per_train_video", "Training clips per motion");
  }

  int run() {
    const json cfg = resolve();
    BenchmarkOptions o = usage_guard([&] {
      BenchmarkOptions b;
      b.seed = cfg.at("seed");
      b.train_clips = cfg.at("train_clips");
      b.test_clips = cfg.at("test_clips");
      b.clip_length = cfg.at("T");
      b.stride = cfg.at("stride");
      b.train_subjects = cfg.at("train_subjects");
      b.test_subjects = cfg.at("test_subjects");
      b.clips_per_train_video = cfg.at("clips_per_train_video");
      b.noise = cfg.at("noise").get<NoiseSpec>();
      b.motion = cfg.at("motion").get<MotionOptions>();
      b.noise.validate();
      return b;
    });
    const fs::path dir = make_out_dir(out);
    const json manifest = usage_guard([&] { return make_benchmark(dir, o); });
    write_run(dir, "gen-data", cfg);
    say("wrote " + std::to_string(manifest.at("splits").at("train").size()) + " train / " +
        std::to_string(manifest.at("splits").at("test").size()) + " test clips to " + dir.string() +
        " (input MPJPE " + fmt("%.2f", manifest.value("reference_input_mpjpe_mm", 0.0)) + " mm)");
    return 0;
  }
};

// ----------------------------------------------------------- train-smoother

json smoother_train_defaults() {
  const SmootherTrainConfig t;
  return {{"seed", t.seed},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"T", 16},
          {"adam", adam_json(t.adam)},
          {"loss", {{"motion_loss", t.loss.motion_loss}, {"norm", "l2"}}},
          {"model", SmootherConfig{}}};
}

SmootherTrainConfig smoother_train_from(const json& cfg) {
  SmootherTrainConfig t;
  t.seed = cfg.at("seed");
  t.epochs = cfg.at("epochs");
  t.batch_size = cfg.at("batch_size");
  t.adam = adam_from(cfg.at("adam"));
  t.loss.motion_loss = cfg.at("loss").at("motion_loss");
  t.loss.norm = norm_from(cfg.at("loss").at("norm"));
  t.adam.validate();
  return t;
}

void add_smoother_model_flags(ConfigFlags& flags, CLI::App* app, const std::string& prefix) {
  flags.add<std::vector<int>>(app, "--kernel", prefix + "/kernel", "Kernel size T V C")->expected(3);
  flags.add<std::vector<int>>(app, "--padding", prefix + "/padding", "Padding T V C (default: volume preserving)")
      ->expected(3);
  flags.add<int>(app, "--layers", prefix + "/layers", "Convolution layers");
  flags.add<int>(app, "--channels", prefix + "/channels", "Hidden channel width");
  flags.add<bool>(app, "--residual", prefix + "/residual", "Add the input to the network output");
  flags.add<std::string>(app, "--activation", prefix + "/activation", "leaky_relu, relu or identity");
}

// A kernel given without padding gets volume-preserving padding.
void derive_padding(json& cfg, const CLI::App* app, const std::string& prefix) {
  if (app->count("--kernel") > 0 && app->count("--padding") == 0) {
    cfg[json::json_pointer(prefix + "/padding")] = padding_for(cfg[json::json_pointer(prefix + "/kernel")]);
  }
}

struct TrainSmoother : Command {
  std::string data, out;

  explicit TrainSmoother(CLI::App& root) {
    app = root.add_subcommand("train-smoother", "Train the mesh-cuboid smoother on a benchmark");
    defaults = smoother_train_defaults();
    app->add_option("--data", data, "Benchmark directory")->required();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--config", config_path, "JSON config merged under the flags");
    flags.add<std::uint64_t>(app, "--seed", "/seed", "Initialization and shuffling seed");
    flags.add<int>(app, "--epochs", "/epochs", "Training epochs");
    flags.add<int>(app, "--batch-size", "/batch_size", "Clips per gradient step");
    flags.add<int>(app, "--T", "/T", "Expected frames per clip");
    flags.add<double>(app, "--lr", "/adam/lr", "Adam learning rate");
    flags.add<double>(app, "--weight-decay", "/adam/weight_decay", "L2 weight decay");
    flags.add<double>(app, "--clip-grad-norm", "/adam/clip_grad_norm", "Global gradient norm clip (0 = off)");
    flags.add<bool>(app, "--motion-loss", "/loss/motion_loss", "Include the motion loss term");
    flags.add<std::string>(app, "--loss-norm", "/loss/norm", "l2 or squared_l2");
    add_smoother_model_flags(flags, app, "/model");
  }

  int run() {
    json cfg = resolve();
    derive_padding(cfg, app, "/model");
    const auto [tc, model_cfg, T] = usage_guard([&] {
      SmootherConfig m = cfg.at("model").get<SmootherConfig>();
      m.validate();
      return std::tuple{smoother_train_from(cfg), m, cfg.at("T").get<int>()};
    });
    const Benchmark bench = load_benchmark(data);
    for (const auto& c : bench.train) {
      if (c.noisy.frames() != T) {
        throw UsageError("benchmark clips have " + std::to_string(c.noisy.frames()) + " frames, --T is " +
                         std::to_string(T));
      }
    }
    const fs::path dir = make_out_dir(out);
    const auto train = smoother_clips(bench.train);
    const auto test = smoother_clips(bench.test);
    const SmootherTrainResult r = train_smoother(
        model_cfg, bench.model.joint_regressor(), train, test, tc, [&](const EpochLog& l) {
          if (l.epoch == 1 || l.epoch % 10 == 0 || l.epoch == tc.epochs) {
            say("epoch " + std::to_string(l.epoch) + "/" + std::to_string(tc.epochs) + "  loss " +
                fmt("%.5f", l.train_loss) + "  held-out MPJPE " + fmt("%.2f", l.heldout_mpjpe_mm) + " mm");
          }
        });
    json epochs = json::array();
    for (const auto& l : r.log) {
      epochs.push_back({{"epoch", l.epoch},
                        {"train_loss", finite_or_null(l.train_loss)},
                        {"heldout_mpjpe_mm", finite_or_null(l.heldout_mpjpe_mm)}});
    }
    write_json(dir / "train_log.json", {{"input_mpjpe_mm", bench.reference_input_mpjpe_mm},
                                        {"epochs", epochs},
                                        {"diverged", r.diverged},
                                        {"message", r.message}});
    save_smoother(dir / "smoother.mprm", r.params,
                  {{"train", cfg}, {"seed", tc.seed}, {"benchmark", bench.manifest.value("seed", 0)}});
    write_run(dir, "train-smoother", cfg, {{"data", data}});
    if (r.diverged) {
      std::cerr << "error: " << r.message << " (checkpoint holds the last finite parameters)\n";
      return 1;
    }
    return 0;
  }
};

// ----------------------------------------------------------- train-transfer

struct TrainTransfer : Command {
  std::string out, body_model;

  explicit TrainTransfer(CLI::App& root) {
    app = root.add_subcommand("train-transfer", "Train the pose-transfer network on synthetic pairs");
    const TransferTrainConfig t;
    defaults = {{"seed", t.seed},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"adam", adam_json(t.adam)},
                {"model", TransferConfig{}},
                {"identities", 8},
                {"poses", 100},
                {"heldout_identities", 2},
                {"heldout_poses", 20}};
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--body-model", body_model, "Body model file (default: built-in humanoid)");
    app->add_option("--config", config_path, "JSON config merged under the flags");
    flags.add<std::uint64_t>(app, "--seed", "/seed", "Data, initialization and shuffling seed");
    flags.add<int>(app, "--epochs", "/epochs", "Training epochs");
    flags.add<int>(app, "--batch-size", "/batch_size", "Pairs per gradient step");
    flags.add<double>(app, "--lr", "/adam/lr", "Adam learning rate");
    flags.add<int>(app, "--identities", "/identities", "Training identities");
    flags.add<int>(app, "--poses", "/poses", "Training poses per identity");
    flags.add<int>(app, "--heldout-identities", "/heldout_identities", "Held-out identities");
    flags.add<int>(app, "--heldout-poses", "/heldout_poses", "Held-out poses per identity");
    flags.add<int>(app, "--latent", "/model/latent", "Pose latent size");
    flags.add<int>(app, "--blocks", "/model/blocks", "Decoder blocks");
    flags.add<double>(app, "--edge-weight", "/model/edge_weight", "Edge-length regularizer weight");
  }

  int run() {
    const json cfg = resolve();
    const auto [tc, model_cfg] = usage_guard([&] {
      TransferTrainConfig t;
      t.seed = cfg.at("seed");
      t.epochs = cfg.at("epochs");
      t.batch_size = cfg.at("batch_size");
      t.adam = adam_from(cfg.at("adam"));
      t.adam.validate();
      TransferConfig m = cfg.at("model").get<TransferConfig>();
      m.validate();
      if (cfg.at("identities").get<int>() < 2 || cfg.at("heldout_identities").get<int>() < 2) {
        throw std::invalid_argument("pairs need at least two identities");
      }
      return std::pair{t, m};
    });
    const BodyModel model = body_model_from(body_model);
    const fs::path dir = make_out_dir(out);
    const auto train = make_transfer_pairs(model, cfg.at("identities"), cfg.at("poses"), derive_seed(tc.seed, 1));
    const auto held = make_transfer_pairs(model, cfg.at("heldout_identities"), cfg.at("heldout_poses"),
                                          derive_seed(tc.seed, 2));
    double copy = 0.0;
    for (const auto& p : held) copy += mean_vertex_error(p.identity.vertices, p.target);
    copy /= static_cast<double>(held.size());
    say("held-out copy-identity error " + fmt("%.4f", copy) + " m");
    const TransferTrainResult r = train_transfer(model_cfg, train, held, tc, [&](const TransferEpochLog& l) {
      if (l.epoch == 1 || l.epoch % 5 == 0 || l.epoch == tc.epochs) {
        say("epoch " + std::to_string(l.epoch) + "/" + std::to_string(tc.epochs) + "  loss " +
            fmt("%.5f", l.train_loss) + "  held-out error " + fmt("%.4f", l.heldout_error) + " m");
      }
    });
    json epochs = json::array();
    for (const auto& l : r.log) {
      epochs.push_back({{"epoch", l.epoch},
                        {"train_loss", finite_or_null(l.train_loss)},
                        {"heldout_error", finite_or_null(l.heldout_error)}});
    }
    write_json(dir / "train_log.json",
               {{"copy_identity_error", copy}, {"epochs", epochs}, {"diverged", r.diverged}, {"message", r.message}});
    save_transfer(dir / "transfer.mprm", r.params,
                  {{"train", cfg},
                   {"seed", tc.seed},
                   {"dataset", {{"identities", cfg.at("identities")}, {"poses", cfg.at("poses")}}}});
    write_run(dir, "train-transfer", cfg, {{"body_model", body_model}});
    if (r.diverged) {
      std::cerr << "error: " << r.message << " (checkpoint holds the last finite parameters)\n";
      return 1;
    }
    return 0;
  }
};

// ------------------------------------------------------------------- smooth

Eigen::VectorXd root_row(const BodyModel& model, int vertices) {
  if (model.num_vertices() != vertices) {
    throw std::runtime_error("input has " + std::to_string(vertices) + " vertices but the body model has " +
                             std::to_string(model.num_vertices()));
  }
  return model.joint_regressor().row(0).transpose();
}

struct Smooth : Command {
  std::string smoother, input, out, body_model;

  explicit Smooth(CLI::App& root) {
    app = root.add_subcommand("smooth", "Smooth a mesh cuboid with a trained smoother");
    app->add_option("--smoother", smoother, "Smoother checkpoint")->required();
    app->add_option("--input", input, "Input .mcub")->required();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--body-model", body_model, "Body model defining the root joint (default: built-in)");
  }

  int run() {
    const SmootherParams params = load_smoother(smoother);
    const MeshCuboid x = read_cuboid(input);
    const BodyModel model = body_model_from(body_model);
    root_row(model, x.points());
    const MeshCuboid y = smooth(params, x, model);
    const fs::path dir = make_out_dir(out);
    write_cuboid(dir / "smoothed.mcub", y);
    write_run(dir, "smooth", json::object(),
              {{"smoother", smoother}, {"input", input}, {"body_model", body_model}});
    say("smoothed " + std::to_string(y.frames()) + " frames");
    return 0;
  }
};

// ----------------------------------------------------------------- transfer

Points read_pose_points(const std::string& path) {
  if (fs::path(path).extension() == ".mcub") {
    const MeshCuboid c = read_cuboid(path);
    return c.frame(0);
  }
  return read_obj(path).vertices;
}

struct Transfer : Command {
  std::string transfer_ckpt, pose, identity, out;

  explicit Transfer(CLI::App& root) {
    app = root.add_subcommand("transfer", "Transfer the pose of one mesh onto an identity mesh");
    app->add_option("--transfer", transfer_ckpt, "Transfer checkpoint")->required();
    app->add_option("--pose", pose, "Pose mesh (.obj, or .mcub for its first frame)")->required();
    app->add_option("--identity", identity, "Identity mesh (.obj)")->required();
    app->add_option("--out", out, "Output directory")->required();
  }

  int run() {
    const TransferParams params = load_transfer(transfer_ckpt);
    const Points p = read_pose_points(pose);
    const Mesh id = read_obj(identity);
    const Mesh m = transfer(params, p, id);
    const fs::path dir = make_out_dir(out);
    write_obj(dir / "transferred.obj", m);
    write_run(dir, "transfer", json::object(),
              {{"transfer", transfer_ckpt}, {"pose", pose}, {"identity", identity}});
    return 0;
  }
};

// ------------------------------------------------------------------ imitate

void write_frames(const fs::path& dir, const MeshCuboid& c, const Faces& faces) {
  for (int t = 0; t < c.frames(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.obj", t);
    write_obj(dir / name, Mesh{c.frame(t), faces});
  }
}

struct Imitate : Command {
  std::string source, identity, smoother, transfer_ckpt, out, body_model, baseline = "none";

  explicit Imitate(CLI::App& root) {
    app = root.add_subcommand("imitate", "Smooth a source sequence and re-target it onto an identity mesh");
    app->add_option("--source", source, "Source mesh cuboid (.mcub)")->required();
    app->add_option("--identity", identity, "Identity mesh (.obj)")->required();
    app->add_option("--smoother", smoother, "Smoother checkpoint (optional with --baseline sapd)");
    app->add_option("--transfer", transfer_ckpt, "Transfer checkpoint");
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--body-model", body_model, "Body model of the source (default: built-in)");
    app->add_option("--baseline", baseline, "none or sapd (skeleton-aligned skinning instead of transfer)")
        ->check(CLI::IsMember({"none", "sapd"}));
  }

  int run() {
    if (baseline == "none" && (smoother.empty() || transfer_ckpt.empty())) {
      throw UsageError("imitate needs --smoother and --transfer (or --baseline sapd)");
    }
    const MeshCuboid src = read_cuboid(source);
    const Mesh id = read_obj(identity);
    const BodyModel model = body_model_from(body_model);
    const Eigen::VectorXd rw = root_row(model, src.points());
    const MeshCuboid result = [&] {
      if (baseline == "sapd") {
        const MeshCuboid smoothed = smoother.empty() ? src : smooth(load_smoother(smoother), src, model);
        if (id.num_vertices() != model.num_vertices()) {
          throw std::runtime_error("the sapd baseline regresses the identity skeleton with the body model, so the "
                                   "identity needs " + std::to_string(model.num_vertices()) + " vertices");
        }
        return sapd_imitate(smoothed, id, model);
      }
      return imitate(load_smoother(smoother), load_transfer(transfer_ckpt), src, id, span_of(rw));
    }();
    const fs::path dir = make_out_dir(out);
    write_cuboid(dir / "imitation.mcub", result);
    write_frames(dir, result, id.faces);
    write_run(dir, "imitate", {{"baseline", baseline}},
              {{"source", source},
               {"identity", identity},
               {"smoother", smoother},
               {"transfer", transfer_ckpt},
               {"body_model", body_model}});
    say("wrote " + std::to_string(result.frames()) + " frames to " + dir.string());
    return 0;
  }
};

// ----------------------------------------------------------------- evaluate

std::string report_text(const EvalReport& input, const EvalReport& pred, const std::string& label) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %12s\n", "video", "input (mm)", "ours (mm)", "delta (mm)");
  os << "MPJPE per video, " << label << (pred.align_root ? " (root aligned)" : "") << "\n" << buf;
  for (const auto& [video, v] : pred.per_video) {
    const double in = input.per_video.at(video);
    std::snprintf(buf, sizeof buf, "%-16s %12.2f %12.2f %12.2f\n", video.c_str(), in, v, v - in);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-16s %12.2f %12.2f %12.2f\n", "overall", input.overall, pred.overall,
                pred.overall - input.overall);
  os << buf;
  return os.str();
}

struct Evaluate : Command {
  std::string data, smoother, predictions, out, split = "test";
  bool ground_truth = false, no_align = false;

  explicit Evaluate(CLI::App& root) {
    app = root.add_subcommand("evaluate", "MPJPE report on a benchmark split");
    app->add_option("--data", data, "Benchmark directory")->required();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    auto* s = app->add_option("--smoother", smoother, "Evaluate a smoother checkpoint");
    auto* p = app->add_option("--predictions", predictions, "Directory of <clip id>.mcub predictions");
    auto* g = app->add_flag("--ground-truth", ground_truth, "Evaluate the ground-truth meshes (sanity check)");
    s->excludes(p)->excludes(g);
    p->excludes(g);
    app->add_flag("--no-align-root", no_align, "Compare absolute joint positions");
  }

  int run() {
    const Benchmark bench = load_benchmark(data);
    const auto& clips = split == "test" ? bench.test : bench.train;
    const json& entries = bench.manifest.at("splits").at(split);
    std::uint64_t seed = 0;
    std::string label = "noisy input";
    std::optional<SmootherParams> params;
    if (!smoother.empty()) {
      params = load_smoother(smoother);
      std::ifstream side(smoother + ".json");
      const json sc = json::parse(side);
      seed = sc.at("metadata").value("seed", std::uint64_t{0});
      label = "smoother " + fs::path(smoother).filename().string();
    } else if (!predictions.empty()) {
      label = "predictions in " + predictions;
    } else if (ground_truth) {
      label = "ground-truth meshes";
    }
    std::vector<EvalItem> inputs, preds;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto& c = clips[i];
      inputs.push_back({c.id, c.video, c.noisy, c.joints});
      MeshCuboid pred = c.noisy;
      if (params) {
        pred = smooth(*params, c.noisy, bench.model);
      } else if (!predictions.empty()) {
        pred = read_cuboid(fs::path(predictions) / (c.id + ".mcub"));
      } else if (ground_truth) {
        const std::string gt = entries.at(i).value("gt_cuboid", "");
        if (gt.empty()) throw std::runtime_error("clip " + c.id + " has no ground-truth cuboid");
        pred = read_cuboid(fs::path(data) / gt);
      }
      preds.push_back({c.id, c.video, std::move(pred), c.joints});
    }
    const EvalReport base = evaluate(inputs, bench.model, !no_align);
    EvalReport report = evaluate(preds, bench.model, !no_align);
    report.seed = seed;

    const fs::path dir = make_out_dir(out);
    json rj = report;
    rj["input"] = {{"overall_mpjpe_mm", base.overall}, {"per_video_mpjpe_mm", base.per_video}};
    rj["label"] = label;
    rj["split"] = split;
    write_json(dir / "report.json", rj);
    write_text(dir / "report.txt", report_text(base, report, label));
    std::ostringstream csv;
    csv << "clip,video,input_mpjpe_mm,mpjpe_mm,improvement_mm\n";
    char buf[128];
    for (std::size_t i = 0; i < report.clips.size(); ++i) {
      const auto& c = report.clips[i];
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", base.clips[i].mpjpe_mm, c.mpjpe_mm,
                    base.clips[i].mpjpe_mm - c.mpjpe_mm);
      csv << c.clip_id << "," << c.video_id << buf;
    }
    write_text(dir / "clips.csv", csv.str());
    write_run(dir, "evaluate", {{"split", split}, {"align_root", !no_align}},
              {{"data", data}, {"smoother", smoother}, {"predictions", predictions}, {"ground_truth", ground_truth}});
    if (!quiet) std::cout << report_text(base, report, label);
    return 0;
  }
};

// ------------------------------------------------------------------- ablate

struct Ablate : Command {
  std::string data, out, study;

  explicit Ablate(CLI::App& root) {
    app = root.add_subcommand("ablate", "Train smoother variants over several seeds and tabulate MPJPE");
    json train = smoother_train_defaults();
    train.erase("seed");
    train.erase("T");
    defaults = {{"seeds", 5}, {"seed_base", 1}, {"shuffle_seed", 1}, {"train", train}};
    app->add_option("--data", data, "Benchmark directory")->required();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--study", study, "motion-loss, kernel or layers")
        ->required()
        ->check(CLI::IsMember({"motion-loss", "kernel", "layers"}));
    app->add_option("--config", config_path, "JSON config merged under the flags");
    flags.add<int>(app, "--seeds", "/seeds", "Number of seeds");
    flags.add<std::uint64_t>(app, "--seed-base", "/seed_base", "First seed");
    flags.add<std::uint64_t>(app, "--shuffle-seed", "/shuffle_seed", "Vertex shuffle for the kernel study");
    flags.add<int>(app, "--epochs", "/train/epochs", "Epochs per run (the 12-layer variant gets twice this)");
    flags.add<int>(app, "--batch-size", "/train/batch_size", "Clips per gradient step");
    flags.add<double>(app, "--lr", "/train/adam/lr", "Adam learning rate");
  }

  int run() {
    const json cfg = resolve();
    const auto [tc, seeds] = usage_guard([&] {
      json t = cfg.at("train");
      t["seed"] = 0;
      const int n = cfg.at("seeds");
      if (n < 1) throw std::invalid_argument("--seeds must be >= 1");
      std::vector<std::uint64_t> s;
      for (int i = 0; i < n; ++i) s.push_back(cfg.at("seed_base").get<std::uint64_t>() + i);
      return std::pair{smoother_train_from(t), s};
    });
    const SmootherConfig base = usage_guard([&] { return cfg.at("train").at("model").get<SmootherConfig>(); });
    Benchmark bench = load_benchmark(data);
    const AblationStudy kind = study == "motion-loss" ? AblationStudy::kMotionLoss
                               : study == "kernel"    ? AblationStudy::kKernel
                                                      : AblationStudy::kLayers;
    if (kind == AblationStudy::kKernel) bench = shuffle_vertices(bench, cfg.at("shuffle_seed"));
    const std::vector<AblationVariant> variants = study_variants(kind, base, tc);
    AblationTable table = ablate(bench, variants, seeds, [](const std::string& s) { say(s); });
    table.title = study_title(kind);
    json verdict;
    std::string verdict_line;
    const int needed = static_cast<int>(std::ceil(0.8 * seeds.size()));
    if (kind != AblationStudy::kLayers) {
      // Claim: row 0 is no worse than row 1 in most seeds.
      const int n = seeds_not_worse(table.rows[0], table.rows[1]);
      const bool holds = n >= needed;
      verdict = {{"claim", table.rows[0].name + " <= " + table.rows[1].name},
                 {"seeds_holding", n},
                 {"seeds", seeds.size()},
                 {"required", needed},
                 {"holds", holds}};
      verdict_line = table.rows[0].name + " <= " + table.rows[1].name + " in " + std::to_string(n) + "/" +
                     std::to_string(seeds.size()) + " seeds: " + (holds ? "direction holds" : "direction not reproduced") +
                     "\n";
    }
    const fs::path dir = make_out_dir(out);
    json tj = ablation_json(table);
    if (!verdict.is_null()) tj["verdict"] = verdict;
    write_json(dir / "ablation.json", tj);
    const std::string text = ablation_text(table) + verdict_line;
    write_text(dir / "ablation.txt", text);
    write_text(dir / "ablation.csv", ablation_csv(table));
    write_run(dir, "ablate", cfg, {{"data", data}, {"study", study}});
    if (!quiet) std::cout << text;
    return 0;
  }
};

// ---------------------------------------------------------------- gradcheck

struct GradCheck : Command {
  std::string module = "all", out;

  explicit GradCheck(CLI::App& root) {
    app = root.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
    defaults = {{"probes", 20}, {"seeds", 5}, {"seed_base", 0}};
    app->add_option("--module", module, "smoother, transfer or all")
        ->check(CLI::IsMember({"smoother", "transfer", "all"}));
    app->add_option("--out", out, "Optional output directory for gradcheck.json");
    app->add_option("--config", config_path, "JSON config merged under the flags");
    flags.add<int>(app, "--probes", "/probes", "Probed parameters per seed");
    flags.add<int>(app, "--seeds", "/seeds", "Number of seeds");
    flags.add<std::uint64_t>(app, "--seed-base", "/seed_base", "First seed");
  }

  int run() {
    const json cfg = resolve();
    const int probes = cfg.at("probes"), nseeds = cfg.at("seeds");
    const std::uint64_t base = cfg.at("seed_base");
    if (probes < 1 || nseeds < 1) throw UsageError("--probes and --seeds must be >= 1");
    json results = json::object();
    bool ok = true;
    for (const std::string m : {"smoother", "transfer"}) {
      if (module != "all" && module != m) continue;
      double worst = 0.0;
      int checked = 0, skipped = 0;
      json runs = json::array();
      for (int s = 0; s < nseeds; ++s) {
        const GradCheckResult r = m == "smoother" ? smoother_grad_check({}, 4, 20, probes, base + s)
                                                  : transfer_grad_check({}, 40, 30, probes, base + s);
        worst = std::max(worst, r.max_relative_error);
        checked += r.probes;
        skipped += r.skipped;
        runs.push_back({{"seed", base + s}, {"max_relative_error", r.max_relative_error}, {"probes", r.probes},
                        {"skipped", r.skipped}});
      }
      const bool pass = worst < kGradTolerance && checked == probes * nseeds;
      ok = ok && pass;
      results[m] = {{"max_relative_error", worst}, {"probes", checked}, {"pass", pass}, {"runs", runs}};
      if (!quiet) {
        std::cout << m << ": max relative error " << fmt("%.3g", worst) << " over " << checked << " probes ("
                  << skipped << " redrawn at kinks) " << (pass ? "PASS" : "FAIL") << "\n";
      }
    }
    if (!out.empty()) {
      const fs::path dir = make_out_dir(out);
      write_json(dir / "gradcheck.json", {{"tolerance", kGradTolerance}, {"modules", results}});
      write_run(dir, "gradcheck", cfg, {{"module", module}});
    }
    return ok ? 0 : 1;
  }
};

// --------------------------------------------------------------- export-obj

struct ExportObj : Command {
  std::string input, faces_from, body_model, out;

  explicit ExportObj(CLI::App& root) {
    app = root.add_subcommand("export-obj", "Write each frame of a mesh cuboid as an OBJ file");
    app->add_option("--input", input, "Mesh cuboid (.mcub)")->required();
    app->add_option("--out", out, "Output directory")->required();
    auto* f = app->add_option("--faces-from", faces_from, "OBJ whose faces to use");
    app->add_option("--body-model", body_model, "Body model whose faces to use (default: built-in)")->excludes(f);
  }

  int run() {
    const MeshCuboid c = read_cuboid(input);
    const Faces faces = faces_from.empty() ? body_model_from(body_model).faces() : read_obj(faces_from).faces;
    for (Eigen::Index f = 0; f < faces.rows(); ++f)
      for (int k = 0; k < 3; ++k)
        if (faces(f, k) >= c.points()) {
          throw std::runtime_error("faces reference vertex " + std::to_string(faces(f, k)) + " but the cuboid has " +
                                   std::to_string(c.points()));
        }
    const fs::path dir = make_out_dir(out);
    write_frames(dir, c, faces);
    write_run(dir, "export-obj", json::object(),
              {{"input", input}, {"faces_from", faces_from}, {"body_model", body_model}});
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  CLI::App app{"Mesh-cuboid smoothing, pose transfer and imitation on a synthetic human body model"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  GenData gen(app);
  TrainSmoother train_smoother_cmd(app);
  TrainTransfer train_transfer_cmd(app);
  Smooth smooth_cmd(app);
  Transfer transfer_cmd(app);
  Imitate imitate_cmd(app);
  Evaluate evaluate_cmd(app);
  Ablate ablate_cmd(app);
  GradCheck gradcheck_cmd(app);
  ExportObj export_cmd(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen.app) return gen.run();
    if (*train_smoother_cmd.app) return train_smoother_cmd.run();
    if (*train_transfer_cmd.app) return train_transfer_cmd.run();
    if (*smooth_cmd.app) return smooth_cmd.run();
    if (*transfer_cmd.app) return transfer_cmd.run();
    if (*imitate_cmd.app) return imitate_cmd.run();
    if (*evaluate_cmd.app) return evaluate_cmd.run();
    if (*ablate_cmd.app) return ablate_cmd.run();
    if (*gradcheck_cmd.app) return gradcheck_cmd.run();
    if (*export_cmd.app) return export_cmd.run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
