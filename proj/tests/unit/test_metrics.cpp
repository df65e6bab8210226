#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mvai/metrics.hpp"
#include "mvai/synth.hpp"
#include "support.hpp"

using namespace mvai;

namespace {

double mpjpe_oracle(const JointSeq& p, const JointSeq& g, bool align) {
  double s = 0.0;
  for (int t = 0; t < p.frames(); ++t) {
    for (int j = 0; j < p.points(); ++j) {
      Eigen::Vector3d d;
      for (int c = 0; c < 3; ++c) {
        d[c] = double(p.at(t, j, c)) - double(g.at(t, j, c));
        if (align) d[c] -= double(p.at(t, 0, c)) - double(g.at(t, 0, c));
      }
      s += d.norm();
    }
  }
  return 1000.0 * s / (p.frames() * p.points());
}

JointSeq offset(const JointSeq& s, int joint, Eigen::Vector3f by) {
  JointSeq out = s;
  for (int t = 0; t < s.frames(); ++t)
    for (int j = 0; j < s.points(); ++j)
      if (joint < 0 || j == joint)
        for (int c = 0; c < 3; ++c) out.at(t, j, c) += by[c];
  return out;
}

BenchmarkOptions tiny_benchmark() {
  BenchmarkOptions o;
  o.train_clips = 4;
  o.test_clips = 2;
  o.clip_length = 4;
  o.clips_per_train_video = 2;
  return o;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("mpjpe hand cases") {
    const JointSeq gt = JointSeq::zeros(3, 5);
    CHECK(mpjpe(offset(gt, -1, {0.01f, 0, 0}), gt, false) == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(mpjpe(offset(gt, -1, {0.01f, 0, 0}), gt, true) == 0.0);
    CHECK(mpjpe(offset(gt, 3, {0, 0.01f, 0}), gt, true) == doctest::Approx(10.0 / 5).epsilon(1e-6));
    CHECK(mpjpe(gt, gt) == 0.0);
    CHECK_THROWS_AS(mpjpe(gt, JointSeq::zeros(3, 4)), std::invalid_argument);
    CHECK_THROWS_AS(mpjpe(gt, JointSeq::zeros(2, 5)), std::invalid_argument);
  }

  TEST_CASE("mpjpe matches a brute-force oracle and is symmetric") {
    std::mt19937_64 rng(51);
    for (int i = 0; i < 20; ++i) {
      const JointSeq a = testing::random_joints(4, 5, rng), b = testing::random_joints(4, 5, rng);
      for (bool align : {false, true}) {
        CHECK(mpjpe(a, b, align) == doctest::Approx(mpjpe_oracle(a, b, align)).epsilon(1e-12));
        CHECK(mpjpe(a, b, align) == mpjpe(b, a, align));
      }
    }
  }

  TEST_CASE("root alignment removes per-frame translation of the prediction") {
    std::mt19937_64 rng(52);
    const JointSeq gt = testing::random_joints(6, 24, rng, 0.5);
    const JointSeq pred = testing::random_joints(6, 24, rng, 0.5);
    JointSeq moved = pred;
    for (int t = 0; t < 6; ++t)
      for (int j = 0; j < 24; ++j) moved.at(t, j, 1) += 0.25f * t;
    CHECK(mpjpe(moved, gt) == doctest::Approx(mpjpe(pred, gt)).epsilon(1e-5));
    CHECK(mpjpe(moved, gt, false) != doctest::Approx(mpjpe(pred, gt, false)).epsilon(1e-5));
  }

  TEST_CASE("evaluate aggregates per clip, per video and overall") {
    const BodyModel model = testing::chain_model();
    std::mt19937_64 rng(53);
    std::vector<EvalItem> items;
    const char* videos[] = {"v0", "v0", "v1"};
    for (int i = 0; i < 3; ++i) {
      items.push_back({"c" + std::to_string(i), videos[i], testing::random_cuboid(3, 4, rng),
                       testing::random_joints(3, 3, rng)});
    }
    const EvalReport r = evaluate(items, model);
    REQUIRE(r.clips.size() == 3);
    double each[3];
    for (int i = 0; i < 3; ++i) {
      each[i] = mpjpe(regress_sequence(model.joint_regressor(), items[i].prediction), items[i].target);
      CHECK(r.clips[i].mpjpe_mm == each[i]);
      CHECK(r.clips[i].video_id == videos[i]);
    }
    CHECK(r.per_video.at("v0") == doctest::Approx((each[0] + each[1]) / 2).epsilon(1e-14));
    CHECK(r.per_video.at("v1") == each[2]);
    CHECK(r.overall == doctest::Approx((each[0] + each[1] + each[2]) / 3).epsilon(1e-14));
    CHECK(r.fingerprint.size() == 16);
    CHECK(evaluate(items, model).fingerprint == r.fingerprint);
    items[1].prediction.at(0, 0, 0) += 1.0f;
    CHECK(evaluate(items, model).fingerprint != r.fingerprint);
    CHECK(evaluate({}, model).overall == 0.0);
  }

  TEST_CASE("ground truth scores zero") {
    const BodyModel model = make_humanoid();
    const GeneratedClip clip =
        gen_clip(model, random_motion(model.num_joints(), 54), random_shape(model.num_shape_coeffs(), 55), 6);
    const EvalReport r = evaluate({{"c", "v", clip.cuboid, clip.joints}}, model);
    CHECK(r.overall <= 1e-6);
  }

  TEST_CASE("vertex shuffling permutes cuboids and regressor together") {
    testing::TempDir dir("shuffle");
    make_benchmark(dir.path(), tiny_benchmark());
    const Benchmark bench = load_benchmark(dir.path());
    const Benchmark shuffled = shuffle_vertices(bench, 3);
    REQUIRE(shuffled.train.size() == bench.train.size());
    for (std::size_t i = 0; i < bench.train.size(); ++i) {
      const JointSeq a = regress_sequence(bench.model.joint_regressor(), bench.train[i].noisy);
      const JointSeq b = regress_sequence(shuffled.model.joint_regressor(), shuffled.train[i].noisy);
      CHECK(mpjpe(a, b, false) <= 1e-4);
      std::vector<float> x(bench.train[i].noisy.data().begin(), bench.train[i].noisy.data().end());
      std::vector<float> y(shuffled.train[i].noisy.data().begin(), shuffled.train[i].noisy.data().end());
      CHECK_FALSE(x == y);
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      CHECK(x == y);
    }
    CHECK(shuffle_vertices(bench, 3).model.template_vertices() == shuffled.model.template_vertices());
  }

  TEST_CASE("a single-variant ablation equals training and evaluating by hand") {
    testing::TempDir dir("ablate");
    make_benchmark(dir.path(), tiny_benchmark());
    const Benchmark bench = load_benchmark(dir.path());
    AblationVariant v;
    v.name = "base";
    v.config.layers = 3;
    v.train.epochs = 2;
    const AblationTable t = ablate(bench, {v}, {4, 5});
    REQUIRE(t.rows.size() == 1);
    REQUIRE(t.rows[0].cells.size() == 2);
    CHECK(t.input_mpjpe_mm == bench.reference_input_mpjpe_mm);

    const auto train = smoother_clips(bench.train);
    for (const AblationCell& cell : t.rows[0].cells) {
      SmootherTrainConfig tc = v.train;
      tc.seed = cell.seed;
      const SmootherTrainResult r = train_smoother(v.config, bench.model.joint_regressor(), train, {}, tc);
      std::vector<EvalItem> items;
      for (const auto& c : bench.test) items.push_back({c.id, c.video, smooth(r.params, c.noisy, bench.model), c.joints});
      CHECK(cell.mpjpe_mm == doctest::Approx(evaluate(items, bench.model).overall).epsilon(1e-4));
      CHECK_FALSE(cell.diverged);
    }
    CHECK(t.rows[0].mean == doctest::Approx((t.rows[0].cells[0].mpjpe_mm + t.rows[0].cells[1].mpjpe_mm) / 2));

    const nlohmann::json j = ablation_json(t);
    CHECK(j["rows"][0]["variant"] == "base");
    CHECK(j["rows"][0]["runs"].size() == 2);
    CHECK(ablation_csv(t).find("base") != std::string::npos);
    CHECK(ablation_text(t).find("base") != std::string::npos);
  }

  TEST_CASE("seed-wise comparison") {
    AblationRow a{"a", {{1, 10.0}, {2, 12.0}, {3, 9.0}}}, b{"b", {{1, 11.0}, {2, 12.0}, {3, 8.0}}};
    CHECK(seeds_not_worse(a, b) == 2);
    CHECK(seeds_not_worse(b, a) == 2);
    AblationRow c{"c", {{1, 1.0}}};
    CHECK_THROWS_AS(seeds_not_worse(a, c), std::invalid_argument);
  }

  TEST_CASE("profile monotonicity helper") {
    CHECK(strictly_increasing({{0, 1, 1}, {0, 2, 2}, {0, 3, 3}}));
    CHECK_FALSE(strictly_increasing({{0, 1, 1}, {0, 2, 2}, {0, 3, 2}}));
    CHECK_FALSE(strictly_increasing({{0, 1, 1}, {0, 1, 2}}));
    CHECK(strictly_increasing({}));
  }
}
