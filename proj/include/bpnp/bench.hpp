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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpnp/datagen.hpp"
#include "bpnp/otmatch.hpp"
#include "bpnp/pipeline.hpp"

namespace bpnp {

inline constexpr int kReportSchemaVersion = 1;

// Evenly spaced thresholds max/steps, 2 max/steps, ..., max.
std::vector<double> ThresholdGrid(double max, std::size_t steps);

struct ExperimentSpec {
  std::filesystem::path dataset;
  std::filesystem::path val_dataset;  // train only
  std::filesystem::path checkpoint;
  std::optional<nlohmann::json> pipeline;  // inline pipeline config
  std::filesystem::path pipeline_config;   // or a path to one
  std::filesystem::path out_dir = "bpnp_out";
  std::vector<double> outlier_ratios = {0.0, 0.25, 0.5, 1.0};
  std::vector<std::size_t> k_list = {50, 100, 200, 500, 1000, 2000};
  std::vector<RetrievalStrategy> strategies = {std::begin(kAllStrategies),
                                               std::end(kAllStrategies)};
  std::vector<double> rot_thresholds = ThresholdGrid(30.0, 60);
  std::vector<double> trans_thresholds = ThresholdGrid(1.0, 60);
  std::uint64_t seed = 0;
  std::size_t max_samples = 0;  // 0 = whole dataset
  bool use_refiner = true;
  std::uint64_t baseline_budget = 1000;
  std::size_t threads = 1;

  // Applies BPNP_OUT_DIR and BPNP_THREADS when set.
  void ApplyEnvironment();
  // Throws kConfiguration.
  void Validate(bool need_dataset, bool need_checkpoint) const;
  nlohmann::json ToJson() const;
  static ExperimentSpec FromJson(const nlohmann::json& j);
  PipelineConfig LoadPipelineConfig() const;
};

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  bool operator==(const Quartiles&) const = default;
};

// Linear interpolation between closest ranks: position (n - 1) q.
double Quantile(std::vector<double> values, double q);
Quartiles ComputeQuartiles(const std::vector<double>& values);

struct StageTimings {
  double features = 0.0;
  double matching = 0.0;
  double refine = 0.0;
  double pose = 0.0;
  double analysis = 0.0;  // retrieval curves and bookkeeping
  double wall = 0.0;
  nlohmann::json ToJson() const;
};

struct MetricsReport {
  int schema_version = kReportSchemaVersion;
  std::string kind;  // "eval", "baseline", "sweep-point"
  nlohmann::json meta;
  std::vector<double> rot_errors;  // degrees, per sample
  std::vector<double> trans_errors;
  Quartiles rot_quartiles;
  Quartiles trans_quartiles;
  std::vector<double> rot_thresholds;
  std::vector<double> rot_recall;
  std::vector<double> trans_thresholds;
  std::vector<double> trans_recall;
  std::vector<std::size_t> k_list;
  // strategy name -> mean inlier count at each K
  std::map<std::string, std::vector<double>> inliers_vs_k;
  // mean inlier ratio of the Top-K_w list before / after the refiner
  double inlier_ratio_candidates = 0.0;
  double inlier_ratio_filtered = 0.0;
  std::size_t refiner_fallbacks = 0;
  std::size_t no_consensus = 0;
  nlohmann::json extra;  // kind-specific fields
  StageTimings timings;  // not serialized into the report

  nlohmann::json ToJson() const;
  static MetricsReport FromJson(const nlohmann::json& j);
  // Fills quartiles and recall curves from the per-sample errors.
  void Summarize();
};

// Strategy lists ordered by score (W descending / H ascending, ties by
// flat index) and truncated to K; NN and MNN lists are shorter than K when
// they have fewer entries.
MatchList RankedRetrieve(const Matrix& W, const Matrix& H, RetrievalStrategy s, std::size_t K);

// Per-sample evaluation of `scenes`, parallel over BPNP_THREADS workers with
// results kept in sample order. Each sample uses RANSAC seed
// cfg.ransac.seed + index.
MetricsReport EvaluateScenes(const Pipeline& pipe, const std::vector<SceneSample>& scenes,
                             const ExperimentSpec& spec);

MetricsReport RunEval(const ExperimentSpec& spec);

struct SweepRow {
  double ratio = 0.0;
  std::string mode;  // "3d", "2d", "joint"
  double median_rot = 0.0;
  double median_trans = 0.0;
  double mean_topk_inliers = 0.0;
};

struct SweepReport {
  int schema_version = kReportSchemaVersion;
  nlohmann::json meta;
  std::vector<SweepRow> rows;
  StageTimings timings;
  nlohmann::json ToJson() const;
};

// Outliers for sample i, ratio index r and mode m come from a stream seeded
// with seed ^ hash(i, r, m); ratio 0 leaves the scene untouched.
SweepReport RunOutlierSweep(const ExperimentSpec& spec);
SweepReport SweepScenes(const Pipeline& pipe, const std::vector<SceneSample>& scenes,
                        const ExperimentSpec& spec);

struct BaselineStats {
  std::uint64_t hypotheses = 0;
  std::uint64_t all_inlier_hypotheses = 0;
  std::size_t scenes = 0;
  std::size_t scenes_with_all_inlier_sample = 0;
  double pair_inlier_probability = 0.0;  // mean #gt / (M N)
  double predicted_hypothesis_rate = 0.0;  // w^4
  double predicted_scene_success = 0.0;    // 1 - (1 - w^4)^B
};

// P3P-RANSAC on uniformly random correspondences: each hypothesis draws four
// distinct 3D points and an independent uniform 2D point for each. A
// hypothesis is scored by the number of 3D points whose projection lies
// within the inlier threshold of some 2D point.
MetricsReport RunBaselineRandomRansac(const ExperimentSpec& spec);
MetricsReport BaselineScenes(const std::vector<SceneSample>& scenes, const RansacConfig& ransac,
                             const ExperimentSpec& spec, BaselineStats* stats = nullptr);

// JSON report plus CSV curves in `dir`; timings go to timings.json so the
// report itself stays reproducible.
void WriteReport(const std::filesystem::path& dir, const MetricsReport& report);
void WriteSweepReport(const std::filesystem::path& dir, const SweepReport& report);
MetricsReport ReadReport(const std::filesystem::path& path);

// Thread count from BPNP_THREADS (>= 1) or `fallback`.
std::size_t ThreadsFromEnv(std::size_t fallback);

}  // namespace bpnp
