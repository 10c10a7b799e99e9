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

#include "bpnp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "bpnp/dataset_io.hpp"
#include "bpnp/error.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Runs fn(i) for i in [0, n) on `threads` workers; results are written by
// index so the outcome does not depend on scheduling. The exception of the
// lowest failing index is rethrown.
template <typename Fn>
void ParallelFor(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t t) {
    for (std::size_t i = t; i < n; i += threads) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void RequireIncreasing(const std::vector<double>& v, const char* name) {
  Require(!v.empty(), ErrorKind::kConfiguration, std::string(name) + " must be non-empty");
  for (std::size_t i = 1; i < v.size(); ++i) {
    Require(v[i] > v[i - 1], ErrorKind::kConfiguration,
            std::string(name) + " must be strictly increasing");
  }
}

std::vector<double> GridFromJson(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return ThresholdGrid(j.at("max").get<double>(), j.at("steps").get<std::size_t>());
}

std::vector<SceneSample> LoadScenes(const std::filesystem::path& path, std::size_t max_samples,
                                    nlohmann::json* info) {
  Dataset ds = ReadDataset(path);
  if (max_samples > 0 && ds.scenes.size() > max_samples) ds.scenes.resize(max_samples);
  if (info != nullptr) {
    *info = {{"path", path.string()},
             {"protocol", ProtocolName(ds.manifest.config.protocol)},
             {"seed", ds.manifest.config.seed},
             {"outlier_ratio", ds.manifest.outlier_ratio},
             {"samples", ds.scenes.size()}};
  }
  return std::move(ds.scenes);
}

nlohmann::json RansacMeta(const RansacConfig& r) {
  return {{"stopping_rule", "adaptive confidence with iteration cap"},
          {"confidence", r.confidence},
          {"max_iterations", r.max_iterations},
          {"threshold_rad", r.threshold},
          {"refine", r.refine}};
}

}  // namespace

std::vector<double> ThresholdGrid(double max, std::size_t steps) {
  Require(max > 0.0 && steps >= 1, ErrorKind::kConfiguration, "invalid threshold grid");
  std::vector<double> g(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    g[i] = max * static_cast<double>(i + 1) / static_cast<double>(steps);
  }
  return g;
}

std::size_t ThreadsFromEnv(std::size_t fallback) {
  if (const char* v = std::getenv("BPNP_THREADS"); v != nullptr && *v != '\0') {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    Require(end != v && *end == '\0' && n >= 1, ErrorKind::kConfiguration,
            "BPNP_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
  }
  return fallback;
}

void ExperimentSpec::ApplyEnvironment() {
  if (const char* v = std::getenv("BPNP_OUT_DIR"); v != nullptr && *v != '\0') out_dir = v;
  threads = ThreadsFromEnv(threads);
}

void ExperimentSpec::Validate(bool need_dataset, bool need_checkpoint) const {
  if (need_dataset) {
    Require(!dataset.empty(), ErrorKind::kConfiguration, "no dataset given");
    Require(std::filesystem::exists(dataset) || std::filesystem::exists(ManifestPath(dataset)),
            ErrorKind::kConfiguration, "dataset not found: " + dataset.string());
  }
  if (need_checkpoint) {
    Require(!checkpoint.empty(), ErrorKind::kConfiguration, "no checkpoint given");
    Require(std::filesystem::exists(checkpoint), ErrorKind::kConfiguration,
            "checkpoint not found: " + checkpoint.string());
  }
  if (!pipeline_config.empty()) {
    Require(std::filesystem::exists(pipeline_config), ErrorKind::kConfiguration,
            "pipeline config not found: " + pipeline_config.string());
  }
  Require(!outlier_ratios.empty(), ErrorKind::kConfiguration, "outlier_ratios is empty");
  for (double r : outlier_ratios) {
    Require(r >= 0.0 && std::isfinite(r), ErrorKind::kConfiguration,
            "outlier ratios must be >= 0");
  }
  Require(!k_list.empty(), ErrorKind::kConfiguration, "k_list is empty");
  for (std::size_t k : k_list) Require(k >= 1, ErrorKind::kConfiguration, "K must be >= 1");
  Require(!strategies.empty(), ErrorKind::kConfiguration, "strategies is empty");
  RequireIncreasing(rot_thresholds, "rot_thresholds");
  RequireIncreasing(trans_thresholds, "trans_thresholds");
  Require(threads >= 1, ErrorKind::kConfiguration, "threads must be >= 1");
  Require(baseline_budget >= 1, ErrorKind::kConfiguration, "baseline_budget must be >= 1");
}

nlohmann::json ExperimentSpec::ToJson() const {
  nlohmann::json j;
  j["dataset"] = dataset.string();
  j["val_dataset"] = val_dataset.string();
  j["checkpoint"] = checkpoint.string();
  if (pipeline) j["pipeline"] = *pipeline;
  j["pipeline_config"] = pipeline_config.string();
  j["outlier_ratios"] = outlier_ratios;
  j["k_list"] = k_list;
  std::vector<std::string> names;
  for (auto s : strategies) names.emplace_back(StrategyName(s));
  j["strategies"] = names;
  j["rot_thresholds"] = rot_thresholds;
  j["trans_thresholds"] = trans_thresholds;
  j["seed"] = seed;
  j["max_samples"] = max_samples;
  j["use_refiner"] = use_refiner;
  j["baseline_budget"] = baseline_budget;
  return j;
}

ExperimentSpec ExperimentSpec::FromJson(const nlohmann::json& j) {
  Require(j.is_object(), ErrorKind::kConfiguration, "experiment config must be an object");
  ExperimentSpec s;
  try {
    if (j.contains("dataset")) s.dataset = j["dataset"].get<std::string>();
    if (j.contains("val_dataset")) s.val_dataset = j["val_dataset"].get<std::string>();
    if (j.contains("checkpoint")) s.checkpoint = j["checkpoint"].get<std::string>();
    if (j.contains("pipeline")) s.pipeline = j["pipeline"];
    if (j.contains("pipeline_config")) s.pipeline_config = j["pipeline_config"].get<std::string>();
    if (j.contains("out_dir")) s.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("outlier_ratios")) s.outlier_ratios = j["outlier_ratios"].get<std::vector<double>>();
    if (j.contains("k_list")) s.k_list = j["k_list"].get<std::vector<std::size_t>>();
    if (j.contains("strategies")) {
      s.strategies.clear();
      for (const auto& n : j["strategies"]) s.strategies.push_back(ParseStrategy(n.get<std::string>()));
    }
    if (j.contains("rot_thresholds")) s.rot_thresholds = GridFromJson(j["rot_thresholds"]);
    if (j.contains("trans_thresholds")) s.trans_thresholds = GridFromJson(j["trans_thresholds"]);
    s.seed = j.value("seed", s.seed);
    s.max_samples = j.value("max_samples", s.max_samples);
    s.use_refiner = j.value("use_refiner", s.use_refiner);
    s.baseline_budget = j.value("baseline_budget", s.baseline_budget);
    s.threads = j.value("threads", s.threads);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("bad experiment config: ") + e.what());
  }
  return s;
}

PipelineConfig ExperimentSpec::LoadPipelineConfig() const {
  if (pipeline) return PipelineConfig::FromJson(*pipeline);
  if (!pipeline_config.empty()) {
    std::ifstream in(pipeline_config);
    Require(in.good(), ErrorKind::kConfiguration, "cannot read " + pipeline_config.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kConfiguration, std::string("bad pipeline config: ") + e.what());
    }
    return PipelineConfig::FromJson(j);
  }
  return PipelineConfig{};
}

double Quantile(std::vector<double> v, double q) {
  Require(!v.empty(), ErrorKind::kInvalidInput, "quantile of an empty list");
  Require(q >= 0.0 && q <= 1.0, ErrorKind::kInvalidInput, "quantile level must be in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

Quartiles ComputeQuartiles(const std::vector<double>& v) {
  return {Quantile(v, 0.25), Quantile(v, 0.5), Quantile(v, 0.75)};
}

nlohmann::json StageTimings::ToJson() const {
  return {{"features_s", features}, {"matching_s", matching}, {"refine_s", refine},
          {"pose_s", pose},         {"analysis_s", analysis}, {"wall_s", wall}};
}

nlohmann::json MetricsReport::ToJson() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["kind"] = kind;
  j["meta"] = meta;
  j["rot_errors_deg"] = rot_errors;
  j["trans_errors"] = trans_errors;
  j["rot_quartiles"] = {{"q1", rot_quartiles.q1}, {"median", rot_quartiles.median},
                        {"q3", rot_quartiles.q3}};
  j["trans_quartiles"] = {{"q1", trans_quartiles.q1}, {"median", trans_quartiles.median},
                          {"q3", trans_quartiles.q3}};
  j["rot_thresholds_deg"] = rot_thresholds;
  j["rot_recall"] = rot_recall;
  j["trans_thresholds"] = trans_thresholds;
  j["trans_recall"] = trans_recall;
  j["k_list"] = k_list;
  j["inliers_vs_k"] = inliers_vs_k;
  j["inlier_ratio_candidates"] = inlier_ratio_candidates;
  j["inlier_ratio_filtered"] = inlier_ratio_filtered;
  j["refiner_fallbacks"] = refiner_fallbacks;
  j["no_consensus"] = no_consensus;
  j["extra"] = extra;
  return j;
}

MetricsReport MetricsReport::FromJson(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    Require(r.schema_version == kReportSchemaVersion, ErrorKind::kConfiguration,
            "unsupported report schema " + std::to_string(r.schema_version));
    r.kind = j.at("kind").get<std::string>();
    r.meta = j.at("meta");
    r.rot_errors = j.at("rot_errors_deg").get<std::vector<double>>();
    r.trans_errors = j.at("trans_errors").get<std::vector<double>>();
    const auto& rq = j.at("rot_quartiles");
    r.rot_quartiles = {rq.at("q1"), rq.at("median"), rq.at("q3")};
    const auto& tq = j.at("trans_quartiles");
    r.trans_quartiles = {tq.at("q1"), tq.at("median"), tq.at("q3")};
    r.rot_thresholds = j.at("rot_thresholds_deg").get<std::vector<double>>();
    r.rot_recall = j.at("rot_recall").get<std::vector<double>>();
    r.trans_thresholds = j.at("trans_thresholds").get<std::vector<double>>();
    r.trans_recall = j.at("trans_recall").get<std::vector<double>>();
    r.k_list = j.at("k_list").get<std::vector<std::size_t>>();
    r.inliers_vs_k = j.at("inliers_vs_k").get<std::map<std::string, std::vector<double>>>();
    r.inlier_ratio_candidates = j.at("inlier_ratio_candidates");
    r.inlier_ratio_filtered = j.at("inlier_ratio_filtered");
    r.refiner_fallbacks = j.at("refiner_fallbacks");
    r.no_consensus = j.at("no_consensus");
    r.extra = j.at("extra");
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("malformed report: ") + e.what());
  }
  return r;
}

void MetricsReport::Summarize() {
  if (rot_errors.empty()) return;
  rot_quartiles = ComputeQuartiles(rot_errors);
  trans_quartiles = ComputeQuartiles(trans_errors);
  rot_recall = RecallCurve(rot_errors, rot_thresholds);
  trans_recall = RecallCurve(trans_errors, trans_thresholds);
}

MatchList RankedRetrieve(const Matrix& W, const Matrix& H, RetrievalStrategy s, std::size_t K) {
  if (s == RetrievalStrategy::kTopKW || s == RetrievalStrategy::kTopKF) {
    return Retrieve(W, H, s, std::min(K, W.size()));
  }
  MatchList list = Retrieve(W, H, s, 0);
  const bool by_w = s == RetrievalStrategy::kNNW || s == RetrievalStrategy::kMNNW;
  const std::size_t N = W.cols();
  std::stable_sort(list.matches.begin(), list.matches.end(), [&](const Match& a, const Match& b) {
    if (a.score != b.score) return by_w ? a.score > b.score : a.score < b.score;
    return a.i3d * N + a.i2d < b.i3d * N + b.i2d;
  });
  if (list.matches.size() > K) list.matches.resize(K);
  return list;
}

namespace {

struct SampleOutcome {
  double rot = 0.0;
  double trans = 0.0;
  bool consensus = false;
  bool fallback = false;
  double ratio_candidates = 0.0;
  double ratio_filtered = 0.0;
  std::size_t topk_inliers = 0;
  std::vector<std::vector<double>> inliers;  // [strategy][k]
  StageTimings t;
};

double Ratio(const MatchList& l) {
  if (l.size() == 0) return 0.0;
  const auto good = static_cast<double>(std::count(l.inlier.begin(), l.inlier.end(), true));
  return good / static_cast<double>(l.size());
}

}  // namespace

MetricsReport EvaluateScenes(const Pipeline& pipe, const std::vector<SceneSample>& scenes,
                             const ExperimentSpec& spec) {
  Require(!scenes.empty(), ErrorKind::kInvalidInput, "no scenes to evaluate");
  const PipelineConfig& base = pipe.config();
  const bool refiner = spec.use_refiner && base.use_refiner && pipe.stage() >= 2;
  std::vector<SampleOutcome> out(scenes.size());
  const auto wall0 = Clock::now();
  ParallelFor(scenes.size(), spec.threads, [&](std::size_t i) {
    const SceneSample& scene = scenes[i];
    SampleOutcome& o = out[i];
    auto t0 = Clock::now();
    Matrix f3d = pipe.featnet().Forward(Stream::k3D, ToMatrix(scene.x3d.points));
    Matrix f2d = pipe.featnet().Forward(Stream::k2D, ToMatrix(scene.normalized2d().points));
    auto t1 = Clock::now();
    const MatchScores sc = ScoresFromFeatures(std::move(f3d), std::move(f2d), base.matcher);
    auto t2 = Clock::now();
    PipelineConfig cfg = base;
    cfg.ransac.seed = base.ransac.seed + i;
    InferOptions opt;
    opt.use_refiner = refiner;
    const InferResult r = InferFromScores(cfg, &pipe.refiner(), scene, sc, opt);
    auto t3 = Clock::now();
    o.rot = RotationErrorDeg(r.estimate.pose.R, scene.pose_gt.R);
    o.trans = TranslationError(r.estimate.pose.t, scene.pose_gt.t);
    o.consensus = r.estimate.consensus;
    o.fallback = r.fallback;
    o.ratio_candidates = Ratio(r.candidates);
    o.ratio_filtered = Ratio(r.filtered);
    o.inliers.resize(spec.strategies.size());
    for (std::size_t s = 0; s < spec.strategies.size(); ++s) {
      for (std::size_t K : spec.k_list) {
        MatchList l = RankedRetrieve(sc.W, sc.H, spec.strategies[s], K);
        o.inliers[s].push_back(static_cast<double>(LabelInliers(l, scene.gt_matches)));
      }
    }
    auto t4 = Clock::now();
    o.t.features = Seconds(t0, t1);
    o.t.matching = Seconds(t1, t2) + r.seconds_matching;
    o.t.refine = r.seconds_refine;
    o.t.pose = r.seconds_pose;
    o.t.analysis = Seconds(t3, t4) +
                   std::max(0.0, Seconds(t2, t3) - r.seconds_matching - r.seconds_refine -
                                     r.seconds_pose);
  });

  MetricsReport rep;
  rep.kind = "eval";
  rep.rot_thresholds = spec.rot_thresholds;
  rep.trans_thresholds = spec.trans_thresholds;
  rep.k_list = spec.k_list;
  for (std::size_t s = 0; s < spec.strategies.size(); ++s) {
    rep.inliers_vs_k[StrategyName(spec.strategies[s])].assign(spec.k_list.size(), 0.0);
  }
  for (const auto& o : out) {
    rep.rot_errors.push_back(o.rot);
    rep.trans_errors.push_back(o.trans);
    if (!o.consensus) ++rep.no_consensus;
    if (o.fallback) ++rep.refiner_fallbacks;
    rep.inlier_ratio_candidates += o.ratio_candidates;
    rep.inlier_ratio_filtered += o.ratio_filtered;
    for (std::size_t s = 0; s < spec.strategies.size(); ++s) {
      auto& row = rep.inliers_vs_k[StrategyName(spec.strategies[s])];
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += o.inliers[s][k];
    }
    rep.timings.features += o.t.features;
    rep.timings.matching += o.t.matching;
    rep.timings.refine += o.t.refine;
    rep.timings.pose += o.t.pose;
    rep.timings.analysis += o.t.analysis;
  }
  const double n = static_cast<double>(out.size());
  rep.inlier_ratio_candidates /= n;
  rep.inlier_ratio_filtered /= n;
  for (auto& [name, row] : rep.inliers_vs_k) {
    for (double& v : row) v /= n;
  }
  rep.timings.wall = Seconds(wall0, Clock::now());
  rep.meta = {{"quantile_convention", "linear interpolation between closest ranks"},
              {"recall_rule", "fraction of errors strictly below each threshold"},
              {"refiner_used", refiner},
              {"pipeline", base.ToJson()},
              {"ransac", RansacMeta(base.ransac)},
              {"ransac_seed_rule", "pipeline ransac seed + sample index"}};
  rep.Summarize();
  return rep;
}

MetricsReport RunEval(const ExperimentSpec& spec) {
  spec.Validate(true, true);
  const Pipeline pipe = Pipeline::Load(spec.checkpoint);
  nlohmann::json info;
  const auto scenes = LoadScenes(spec.dataset, spec.max_samples, &info);
  MetricsReport rep = EvaluateScenes(pipe, scenes, spec);
  rep.meta["dataset"] = info;
  rep.meta["spec"] = spec.ToJson();
  return rep;
}

nlohmann::json SweepReport::ToJson() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"outlier_ratio", r.ratio},
                         {"mode", r.mode},
                         {"median_rot_deg", r.median_rot},
                         {"median_trans", r.median_trans},
                         {"mean_topk_inliers", r.mean_topk_inliers}});
  }
  return {{"schema_version", schema_version}, {"kind", "sweep"}, {"meta", meta}, {"rows", rows_json}};
}

namespace {

std::uint64_t Mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

SweepReport SweepScenes(const Pipeline& pipe, const std::vector<SceneSample>& scenes,
                        const ExperimentSpec& spec) {
  static constexpr const char* kModes[] = {"3d", "2d", "joint"};
  SweepReport rep;
  const auto wall0 = Clock::now();
  ExperimentSpec sub = spec;
  sub.k_list = {std::min(pipe.config().matcher.top_k, spec.k_list.back())};
  sub.strategies = {RetrievalStrategy::kTopKW};
  for (std::size_t ri = 0; ri < spec.outlier_ratios.size(); ++ri) {
    const double nu = spec.outlier_ratios[ri];
    for (int m = 0; m < 3; ++m) {
      std::vector<SceneSample> injected;
      injected.reserve(scenes.size());
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (nu == 0.0) {
          injected.push_back(scenes[i]);
          continue;
        }
        Rng rng(spec.seed ^ Mix(Mix(i) ^ Mix(ri * 3 + static_cast<std::uint64_t>(m) + 0x51u)));
        const double n3 = m != 1 ? nu : 0.0;
        const double n2 = m != 0 ? nu : 0.0;
        injected.push_back(InjectOutliers(scenes[i], n3, n2, rng));
      }
      const MetricsReport r = EvaluateScenes(pipe, injected, sub);
      SweepRow row;
      row.ratio = nu;
      row.mode = kModes[m];
      row.median_rot = r.rot_quartiles.median;
      row.median_trans = r.trans_quartiles.median;
      row.mean_topk_inliers = r.inliers_vs_k.begin()->second.front();
      rep.rows.push_back(row);
      rep.timings.features += r.timings.features;
      rep.timings.matching += r.timings.matching;
      rep.timings.refine += r.timings.refine;
      rep.timings.pose += r.timings.pose;
      rep.timings.analysis += r.timings.analysis;
    }
  }
  rep.timings.wall = Seconds(wall0, Clock::now());
  rep.meta = {{"modes", {"3d", "2d", "joint"}},
              {"topk", sub.k_list.front()},
              {"injection", "uniform in the bounding box of each point set"},
              {"pipeline", pipe.config().ToJson()}};
  return rep;
}

SweepReport RunOutlierSweep(const ExperimentSpec& spec) {
  spec.Validate(true, true);
  const Pipeline pipe = Pipeline::Load(spec.checkpoint);
  nlohmann::json info;
  const auto scenes = LoadScenes(spec.dataset, spec.max_samples, &info);
  SweepReport rep = SweepScenes(pipe, scenes, spec);
  rep.meta["dataset"] = info;
  rep.meta["spec"] = spec.ToJson();
  return rep;
}

MetricsReport BaselineScenes(const std::vector<SceneSample>& scenes, const RansacConfig& ransac,
                             const ExperimentSpec& spec, BaselineStats* stats_out) {
  Require(!scenes.empty(), ErrorKind::kInvalidInput, "no scenes for the baseline");
  BaselineStats st;
  MetricsReport rep;
  rep.kind = "baseline";
  rep.rot_thresholds = spec.rot_thresholds;
  rep.trans_thresholds = spec.trans_thresholds;
  const auto wall0 = Clock::now();
  const std::uint64_t B = spec.baseline_budget;
  double w_sum = 0.0;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const SceneSample& scene = scenes[si];
    const PointSet2D yn = scene.normalized2d();
    const std::size_t M = scene.M(), N = scene.N();
    Require(M >= 4 && N >= 1, ErrorKind::kInvalidInput, "baseline needs M >= 4");
    std::vector<IndexPair> gt = scene.gt_matches;
    std::sort(gt.begin(), gt.end());
    const double w = static_cast<double>(gt.size()) / static_cast<double>(M * N);
    w_sum += w;
    Rng rng(spec.seed + si);
    std::uniform_int_distribution<std::size_t> pick_i(0, M - 1), pick_j(0, N - 1);
    bool found = false;
    std::size_t best_score = 0;
    Pose best_pose;
    auto t0 = Clock::now();
    for (std::uint64_t h = 0; h < B; ++h) {
      std::array<std::size_t, 4> ii, jj;
      bool all_inlier = true;
      for (int s = 0; s < 4; ++s) {
        bool fresh;
        do {
          ii[s] = pick_i(rng);
          fresh = true;
          for (int r = 0; r < s; ++r) fresh = fresh && ii[r] != ii[s];
        } while (!fresh);
        jj[s] = pick_j(rng);
        const IndexPair p{static_cast<std::uint32_t>(ii[s]), static_cast<std::uint32_t>(jj[s])};
        all_inlier = all_inlier && std::binary_search(gt.begin(), gt.end(), p);
      }
      ++st.hypotheses;
      if (all_inlier) {
        ++st.all_inlier_hypotheses;
        found = true;
      }
      Pose pose;
      try {
        pose = P3P({scene.x3d.points[ii[0]], scene.x3d.points[ii[1]], scene.x3d.points[ii[2]],
                    scene.x3d.points[ii[3]]},
                   {yn.points[jj[0]], yn.points[jj[1]], yn.points[jj[2]], yn.points[jj[3]]});
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kNoSolution || e.kind() == ErrorKind::kDegenerateGeometry) {
          continue;
        }
        throw;
      }
      std::size_t score = 0;
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          if (RayAngle(pose, scene.x3d.points[i], yn.points[j]) < ransac.threshold) {
            ++score;
            break;
          }
        }
      }
      if (score > best_score) {
        best_score = score;
        best_pose = pose;
      }
    }
    rep.timings.pose += Seconds(t0, Clock::now());
    if (found) ++st.scenes_with_all_inlier_sample;
    rep.rot_errors.push_back(RotationErrorDeg(best_pose.R, scene.pose_gt.R));
    rep.trans_errors.push_back(TranslationError(best_pose.t, scene.pose_gt.t));
  }
  st.scenes = scenes.size();
  st.pair_inlier_probability = w_sum / static_cast<double>(scenes.size());
  st.predicted_hypothesis_rate = std::pow(st.pair_inlier_probability, 4);
  st.predicted_scene_success =
      RansacSuccessProbability(st.pair_inlier_probability, 4, static_cast<double>(B));
  rep.timings.wall = Seconds(wall0, Clock::now());
  rep.extra = {
      {"budget", B},
      {"hypotheses", st.hypotheses},
      {"all_inlier_hypotheses", st.all_inlier_hypotheses},
      {"empirical_hypothesis_rate",
       static_cast<double>(st.all_inlier_hypotheses) / static_cast<double>(st.hypotheses)},
      {"predicted_hypothesis_rate", st.predicted_hypothesis_rate},
      {"scene_success_ratio", static_cast<double>(st.scenes_with_all_inlier_sample) /
                                  static_cast<double>(st.scenes)},
      {"predicted_scene_success", st.predicted_scene_success},
      {"pair_inlier_probability", st.pair_inlier_probability},
      {"budget_coverage_p0.9",
       st.pair_inlier_probability > 0.0
           ? RansacBudgetCoverage(static_cast<double>(B), 0.9, st.pair_inlier_probability, 4)
           : 0.0}};
  rep.meta = {{"quantile_convention", "linear interpolation between closest ranks"},
              {"sampling", "4 distinct 3D points, independent uniform 2D point each"},
              {"ransac", RansacMeta(ransac)}};
  rep.Summarize();
  if (stats_out != nullptr) *stats_out = st;
  return rep;
}

MetricsReport RunBaselineRandomRansac(const ExperimentSpec& spec) {
  spec.Validate(true, false);
  nlohmann::json info;
  const auto scenes = LoadScenes(spec.dataset, spec.max_samples, &info);
  const RansacConfig ransac = spec.LoadPipelineConfig().ransac;
  MetricsReport rep = BaselineScenes(scenes, ransac, spec);
  rep.meta["dataset"] = info;
  rep.meta["spec"] = spec.ToJson();
  return rep;
}

namespace {

void WriteText(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  Require(out.good(), ErrorKind::kIo, "cannot write " + p.string());
  out << text;
  Require(out.good(), ErrorKind::kIo, "write failed for " + p.string());
}

}  // namespace

void WriteReport(const std::filesystem::path& dir, const MetricsReport& rep) {
  std::filesystem::create_directories(dir);
  WriteText(dir / "report.json", rep.ToJson().dump(2) + "\n");
  std::string rot = "threshold_deg,recall\n";
  for (std::size_t i = 0; i < rep.rot_recall.size(); ++i) {
    rot += Num(rep.rot_thresholds[i]) + "," + Num(rep.rot_recall[i]) + "\n";
  }
  WriteText(dir / "recall_rotation.csv", rot);
  std::string tr = "threshold,recall\n";
  for (std::size_t i = 0; i < rep.trans_recall.size(); ++i) {
    tr += Num(rep.trans_thresholds[i]) + "," + Num(rep.trans_recall[i]) + "\n";
  }
  WriteText(dir / "recall_translation.csv", tr);
  std::string ik = "strategy,k,mean_inliers\n";
  for (const auto& [name, row] : rep.inliers_vs_k) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      ik += name + "," + std::to_string(rep.k_list[k]) + "," + Num(row[k]) + "\n";
    }
  }
  WriteText(dir / "inliers_vs_k.csv", ik);
  std::string err = "sample,rot_deg,trans\n";
  for (std::size_t i = 0; i < rep.rot_errors.size(); ++i) {
    err += std::to_string(i) + "," + Num(rep.rot_errors[i]) + "," + Num(rep.trans_errors[i]) + "\n";
  }
  WriteText(dir / "errors.csv", err);
  WriteText(dir / "timings.json", rep.timings.ToJson().dump(2) + "\n");
}

void WriteSweepReport(const std::filesystem::path& dir, const SweepReport& rep) {
  std::filesystem::create_directories(dir);
  WriteText(dir / "sweep.json", rep.ToJson().dump(2) + "\n");
  std::string csv = "outlier_ratio,mode,median_rot_deg,median_trans,mean_topk_inliers\n";
  for (const auto& r : rep.rows) {
    csv += Num(r.ratio) + "," + r.mode + "," + Num(r.median_rot) + "," + Num(r.median_trans) +
           "," + Num(r.mean_topk_inliers) + "\n";
  }
  WriteText(dir / "sweep.csv", csv);
  WriteText(dir / "timings.json", rep.timings.ToJson().dump(2) + "\n");
}

MetricsReport ReadReport(const std::filesystem::path& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorKind::kConfiguration, "cannot read report " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("malformed report: ") + e.what());
  }
  return MetricsReport::FromJson(j);
}

}  // namespace bpnp
