// Copyright 2026 The BlindPnP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "bpnp/bench.hpp"
#include "bpnp/dataset_io.hpp"
#include "bpnp/error.hpp"

namespace bpnp {
namespace {

std::filesystem::path TempDir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("bpnp_bench_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::create_directories(p);
  return p;
}

TEST(Quantile, Examples) {
  const Quartiles q = ComputeQuartiles({4.0, 1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(q.q1, 1.75);
  EXPECT_DOUBLE_EQ(q.median, 2.5);
  EXPECT_DOUBLE_EQ(q.q3, 3.25);
  EXPECT_EQ(Quantile({7.0}, 0.3), 7.0);
  EXPECT_EQ(Quantile({1.0, 9.0}, 0.0), 1.0);
  EXPECT_EQ(Quantile({1.0, 9.0}, 1.0), 9.0);
  EXPECT_THROW(Quantile({}, 0.5), Error);
  EXPECT_THROW(Quantile({1.0}, 1.5), Error);
}

TEST(Quantile, SortingOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 37);
    for (double& x : v) x = u(rng);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    for (double q : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
      const double pos = q * static_cast<double>(s.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, s.size() - 1);
      const double expect = s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
      EXPECT_NEAR(Quantile(v, q), expect, 1e-12);
    }
    const Quartiles qs = ComputeQuartiles(v);
    EXPECT_LE(qs.q1, qs.median);
    EXPECT_LE(qs.median, qs.q3);
  }
}

TEST(ThresholdGrid, Spacing) {
  const auto g = ThresholdGrid(30.0, 60);
  ASSERT_EQ(g.size(), 60u);
  EXPECT_DOUBLE_EQ(g.front(), 0.5);
  EXPECT_DOUBLE_EQ(g.back(), 30.0);
  EXPECT_THROW(ThresholdGrid(0.0, 5), Error);
}

MetricsReport SampleReport() {
  MetricsReport r;
  r.kind = "eval";
  r.meta = {{"note", "unit"}};
  r.rot_errors = {0.5, 3.0, 1.25, 40.0, 2.0};
  r.trans_errors = {0.01, 0.2, 0.05, 2.0, 0.125};
  r.rot_thresholds = ThresholdGrid(30.0, 60);
  r.trans_thresholds = ThresholdGrid(1.0, 60);
  r.k_list = {50, 100};
  r.inliers_vs_k["topk_w"] = {3.5, 6.0};
  r.inliers_vs_k["nn_f"] = {1.0, 1.0};
  r.inlier_ratio_candidates = 0.1;
  r.inlier_ratio_filtered = 0.3;
  r.refiner_fallbacks = 1;
  r.extra = {{"x", 1}};
  r.Summarize();
  return r;
}

TEST(MetricsReport, SummarizeAndRoundTrip) {
  const MetricsReport r = SampleReport();
  EXPECT_DOUBLE_EQ(r.rot_quartiles.median, 2.0);
  ASSERT_EQ(r.rot_recall.size(), 60u);
  for (std::size_t k = 1; k < r.rot_recall.size(); ++k) EXPECT_GE(r.rot_recall[k], r.rot_recall[k - 1]);
  for (std::size_t k = 1; k < r.trans_recall.size(); ++k) EXPECT_GE(r.trans_recall[k], r.trans_recall[k - 1]);
  // recall counts errors strictly below the threshold
  EXPECT_DOUBLE_EQ(r.rot_recall[3], 2.0 / 5.0);  // threshold 2.0
  EXPECT_DOUBLE_EQ(r.rot_recall.back(), 4.0 / 5.0);

  const auto dir = TempDir("report");
  WriteReport(dir, r);
  const MetricsReport back = ReadReport(dir / "report.json");
  EXPECT_EQ(back.ToJson(), r.ToJson());
  EXPECT_TRUE(std::filesystem::exists(dir / "timings.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "inliers_vs_k.csv"));
  EXPECT_FALSE(r.ToJson().contains("timings"));

  nlohmann::json bad = r.ToJson();
  bad["schema_version"] = 99;
  std::ofstream(dir / "bad.json") << bad.dump();
  EXPECT_THROW(ReadReport(dir / "bad.json"), Error);
  std::filesystem::remove_all(dir);
}

TEST(ExperimentSpec, JsonEnvironmentAndValidation) {
  ExperimentSpec s;
  s.seed = 9;
  s.k_list = {10, 20};
  s.outlier_ratios = {0.0, 0.5};
  const ExperimentSpec back = ExperimentSpec::FromJson(s.ToJson());
  EXPECT_EQ(back.ToJson(), s.ToJson());

  ::setenv("BPNP_OUT_DIR", "/tmp/somewhere", 1);
  ::setenv("BPNP_THREADS", "3", 1);
  ExperimentSpec e;
  e.ApplyEnvironment();
  EXPECT_EQ(e.out_dir, "/tmp/somewhere");
  EXPECT_EQ(e.threads, 3u);
  ::setenv("BPNP_THREADS", "zero", 1);
  EXPECT_THROW(e.ApplyEnvironment(), Error);
  ::unsetenv("BPNP_OUT_DIR");
  ::unsetenv("BPNP_THREADS");

  ExperimentSpec v;
  try {
    v.Validate(true, false);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kConfiguration);
  }
  v.k_list.clear();
  EXPECT_THROW(v.Validate(false, false), Error);
  EXPECT_THROW(ExperimentSpec::FromJson({{"k_list", "many"}}), Error);
}

PipelineConfig TinyPipeline() {
  PipelineConfig c;
  c.featnet.width = 16;
  c.featnet.blocks = 1;
  c.featnet.knn = 4;
  c.featnet.transform_hidden = 8;
  c.refiner.width = 8;
  c.refiner.blocks = 1;
  c.matcher.top_k = 100;
  c.ransac.max_iterations = 2000;
  return c;
}

std::vector<SceneSample> TinyScenes(std::size_t n, std::size_t points, double noise = 2.0) {
  ProtocolConfig p = ProtocolConfig::ModelNet();
  p.num_points = points;
  p.noise_sigma = noise;
  p.seed = 17;
  std::vector<SceneSample> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(SynthesizeSample(p, k));
  return out;
}

TEST(Eval, ReportShapeTimingsAndDeterminism) {
  const Pipeline pipe(TinyPipeline());
  const auto scenes = TinyScenes(6, 30);
  ExperimentSpec spec;
  spec.k_list = {10, 50, 100};
  const MetricsReport a = EvaluateScenes(pipe, scenes, spec);
  spec.threads = 3;
  const MetricsReport b = EvaluateScenes(pipe, scenes, spec);
  EXPECT_EQ(a.ToJson(), b.ToJson());
  EXPECT_EQ(a.rot_errors.size(), 6u);
  EXPECT_EQ(a.inliers_vs_k.size(), 6u);
  for (const auto& [name, row] : a.inliers_vs_k) EXPECT_EQ(row.size(), 3u) << name;
  // Top-K lists are nested, so their inlier counts grow with K.
  const auto& w = a.inliers_vs_k.at("topk_w");
  EXPECT_LE(w[0], w[1]);
  EXPECT_LE(w[1], w[2]);
  const StageTimings& t = a.timings;
  EXPECT_GT(t.features, 0.0);
  EXPECT_GT(t.matching, 0.0);
  EXPECT_GT(t.pose, 0.0);
  EXPECT_GT(t.wall, 0.0);
  const double sum = t.features + t.matching + t.refine + t.pose + t.analysis;
  EXPECT_NEAR(sum / t.wall, 1.0, 0.1);
}

TEST(Sweep, ZeroRatioReproducesEval) {
  const Pipeline pipe(TinyPipeline());
  const auto scenes = TinyScenes(5, 30);
  ExperimentSpec spec;
  spec.outlier_ratios = {0.0, 0.5};
  spec.k_list = {100};
  const SweepReport sw = SweepScenes(pipe, scenes, spec);
  ASSERT_EQ(sw.rows.size(), 6u);
  const MetricsReport ev = EvaluateScenes(pipe, scenes, spec);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(sw.rows[m].ratio, 0.0);
    EXPECT_EQ(sw.rows[m].median_rot, ev.rot_quartiles.median);
    EXPECT_EQ(sw.rows[m].median_trans, ev.trans_quartiles.median);
    EXPECT_EQ(sw.rows[m].mean_topk_inliers, ev.inliers_vs_k.at("topk_w").front());
  }
  EXPECT_EQ(sw.rows[3].mode, "3d");
  EXPECT_EQ(sw.rows[4].mode, "2d");
  EXPECT_EQ(sw.rows[5].mode, "joint");
  const SweepReport again = SweepScenes(pipe, scenes, spec);
  EXPECT_EQ(again.ToJson(), sw.ToJson());
}

// Scenes whose every point is visible and matched, so the pair inlier
// probability is exactly 1/M.
std::vector<SceneSample> FullScenes(std::size_t n, std::size_t points) {
  ProtocolConfig p = ProtocolConfig::ModelNet();
  p.num_points = points;
  p.noise_sigma = 0.0;
  p.seed = 23;
  std::vector<SceneSample> out;
  for (std::uint64_t k = 0; out.size() < n; ++k) {
    SceneSample s = SynthesizeSample(p, k);
    if (s.M() == points && s.N() == points && s.gt_matches.size() == points) out.push_back(s);
  }
  return out;
}

TEST(Baseline, BinomialAtFivePoints) {
  const auto scenes = FullScenes(10, 5);
  ExperimentSpec spec;
  spec.baseline_budget = 1000;
  BaselineStats st;
  BaselineScenes(scenes, RansacConfig{}, spec, &st);
  ASSERT_EQ(st.hypotheses, 10000u);
  const double q = std::pow(0.2, 4);
  EXPECT_DOUBLE_EQ(st.predicted_hypothesis_rate, q);
  const double mean = 1e4 * q, sd = std::sqrt(1e4 * q * (1.0 - q));
  EXPECT_NEAR(static_cast<double>(st.all_inlier_hypotheses), mean, 3.0 * sd)
      << st.all_inlier_hypotheses << " vs " << mean;
}

TEST(Baseline, SceneSuccessMatchesClosedForm) {
  const std::size_t n = 300;
  const auto scenes = FullScenes(n, 10);
  ExperimentSpec spec;
  spec.baseline_budget = 2000;
  BaselineStats st;
  const MetricsReport rep = BaselineScenes(scenes, RansacConfig{}, spec, &st);
  const double w = 0.1;
  const double predicted = 1.0 - std::pow(1.0 - std::pow(w, 4), 2000.0);
  EXPECT_NEAR(st.predicted_scene_success, predicted, 1e-12);
  const double empirical = static_cast<double>(st.scenes_with_all_inlier_sample) / n;
  const double sd = std::sqrt(predicted * (1.0 - predicted) / n);
  EXPECT_NEAR(empirical, predicted, 3.0 * sd) << empirical;
  EXPECT_EQ(rep.rot_errors.size(), n);
  EXPECT_DOUBLE_EQ(rep.extra.at("scene_success_ratio").get<double>(), empirical);
}

TEST(Baseline, RandomMatchArithmetic) {
  const double w = 1e-3;
  EXPECT_NEAR(static_cast<double>(RansacIterations(0.9, w, 4)) / 2.3e12, 1.0, 0.05);
  // budget over required iterations, the reading that gives 3.8e-7
  EXPECT_NEAR(RansacBudgetCoverage(8.7e5, 0.9, w, 4) / 3.8e-7, 1.0, 0.05);
  // the probability of at least one all-inlier sample is larger
  EXPECT_NEAR(RansacSuccessProbability(w, 4, 8.7e5) / 8.7e-7, 1.0, 1e-6);
}

#ifdef BPNP_CLI_PATH
int RunCli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" BPNP_CLI_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = TempDir("cli");
  const std::string d = dir.string();
  EXPECT_EQ(RunCli(""), 2);
  EXPECT_EQ(RunCli("frobnicate"), 2);
  EXPECT_EQ(RunCli("datagen --protocol bogus --out " + d + "/x.bin"), 2);
  EXPECT_EQ(RunCli("datagen --count 3 --points 20 --out " + d + "/tiny.bin"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "tiny.bin"));
  EXPECT_EQ(RunCli("eval --dataset " + d + "/tiny.bin --out " + d + "/e"), 2);
  EXPECT_EQ(RunCli("eval --dataset " + d + "/missing.bin --checkpoint nope"), 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(RunCli("eval --config " + d + "/broken.json"), 2);
  EXPECT_EQ(RunCli("train --stage 3 --dataset " + d + "/tiny.bin --out " + d + "/t"), 2);
  EXPECT_EQ(RunCli("baseline --dataset " + d + "/tiny.bin --budget 10", "BPNP_OUT_DIR=" + d + "/envout"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "envout" / "report.json"));
  EXPECT_EQ(RunCli("baseline --dataset " + d + "/tiny.bin", "BPNP_THREADS=0"), 2);
  std::filesystem::remove_all(dir);
}

TEST(Cli, NumericFailureExitsThree) {
  // A learning rate this large drives the features to non-finite values.
  const auto dir = TempDir("cli_numeric");
  const std::string d = dir.string();
  ASSERT_EQ(RunCli("datagen --count 4 --points 20 --out " + d + "/tiny.bin"), 0);
  nlohmann::json cfg = {{"pipeline",
                         {{"featnet", {{"width", 8}, {"blocks", 1}, {"knn", 4}}},
                          {"stage1", {{"lr", 1e300}, {"max_epochs", 3}, {"batch", 2}}}}}};
  std::ofstream(dir / "exp.json") << cfg.dump();
  EXPECT_EQ(RunCli("train --stage 1 --config " + d + "/exp.json --dataset " + d +
                   "/tiny.bin --out " + d + "/t"),
            3);
  std::filesystem::remove_all(dir);
}
#endif

}  // namespace
}  // namespace bpnp
