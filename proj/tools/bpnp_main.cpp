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

// Command-line front end: datagen, train, eval, sweep, baseline.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
// 1 anything else (I/O).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bpnp/bench.hpp"
#include "bpnp/dataset_io.hpp"
#include "bpnp/error.hpp"
#include "bpnp/pipeline.hpp"

namespace {

using bpnp::ErrorKind;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  bpnp::Require(in.good(), ErrorKind::kConfiguration, "cannot read config " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    bpnp::Fail(ErrorKind::kConfiguration, "config " + path + " is not valid JSON: " + e.what());
  }
}

struct CommonFlags {
  std::string config;
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string pipeline_config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_samples;
};

void AddCommon(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "experiment JSON file");
  app->add_option("--dataset", f.dataset, "dataset path (binary file or its .json manifest)");
  app->add_option("--checkpoint", f.checkpoint, "pipeline checkpoint");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--pipeline-config", f.pipeline_config, "pipeline JSON file");
  app->add_option("--seed", f.seed, "experiment seed");
  app->add_option("--max-samples", f.max_samples, "evaluate at most this many samples");
}

// config file < environment < flags
bpnp::ExperimentSpec BuildSpec(const CommonFlags& f, nlohmann::json* raw = nullptr) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) j = ReadJsonFile(f.config);
  if (raw != nullptr) *raw = j;
  bpnp::ExperimentSpec spec = bpnp::ExperimentSpec::FromJson(j);
  spec.ApplyEnvironment();
  if (!f.dataset.empty()) spec.dataset = f.dataset;
  if (!f.checkpoint.empty()) spec.checkpoint = f.checkpoint;
  if (!f.out.empty()) spec.out_dir = f.out;
  if (!f.pipeline_config.empty()) {
    spec.pipeline_config = f.pipeline_config;
    spec.pipeline.reset();
  }
  if (f.seed) spec.seed = *f.seed;
  if (f.max_samples) spec.max_samples = *f.max_samples;
  return spec;
}

int RunDatagen(const CommonFlags& f, const std::string& protocol, std::optional<std::size_t> count,
               std::optional<std::size_t> points, std::optional<double> noise,
               std::optional<double> outliers, const std::string& shape) {
  nlohmann::json raw;
  bpnp::ExperimentSpec spec = BuildSpec(f, &raw);
  const nlohmann::json d = raw.value("datagen", nlohmann::json::object());
  bpnp::ProtocolConfig cfg;
  std::size_t n = 0;
  double ratio = 0.0;
  try {
    const std::string proto = protocol.empty() ? d.value("protocol", std::string("modelnet")) : protocol;
    cfg = bpnp::ParseProtocol(proto) == bpnp::Protocol::kNyuLike ? bpnp::ProtocolConfig::NyuLike()
                                                                  : bpnp::ProtocolConfig::ModelNet();
    cfg.num_points = d.value("num_points", cfg.num_points);
    cfg.euler_range_deg = d.value("euler_range_deg", cfg.euler_range_deg);
    cfg.trans_range = d.value("trans_range", cfg.trans_range);
    cfg.z_offset = d.value("z_offset", cfg.z_offset);
    cfg.focal = d.value("focal", cfg.focal);
    cfg.noise_sigma = d.value("noise_sigma", cfg.noise_sigma);
    cfg.visibility_filter = d.value("visibility_filter", cfg.visibility_filter);
    cfg.seed = d.value("seed", spec.seed);
    if (d.contains("shape")) cfg.shape = bpnp::ParseShape(d["shape"].get<std::string>());
    n = d.value("count", std::size_t{100});
    ratio = d.value("outlier_ratio", 0.0);
  } catch (const nlohmann::json::exception& e) {
    bpnp::Fail(ErrorKind::kConfiguration, std::string("bad datagen config: ") + e.what());
  }
  if (f.seed) cfg.seed = *f.seed;
  if (count) n = *count;
  if (points) cfg.num_points = *points;
  if (noise) cfg.noise_sigma = *noise;
  if (outliers) ratio = *outliers;
  if (!shape.empty()) cfg.shape = bpnp::ParseShape(shape);
  bpnp::Require(n >= 1, ErrorKind::kConfiguration, "count must be >= 1");
  bpnp::Require(ratio >= 0.0, ErrorKind::kConfiguration, "outlier ratio must be >= 0");
  cfg.Validate();
  // --out names the dataset file unless it is an existing directory.
  std::filesystem::path path = spec.dataset;
  if (path.empty() && !f.out.empty() && !std::filesystem::is_directory(f.out)) path = f.out;
  if (path.empty()) path = spec.out_dir / "dataset.bin";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto scenes = bpnp::GenerateDataset(cfg, n, ratio);
  bpnp::DatasetManifest manifest;
  manifest.config = cfg;
  manifest.outlier_ratio = ratio;
  bpnp::WriteDataset(path, scenes, manifest);
  std::cout << "wrote " << scenes.size() << " scenes to " << path.string() << "\n";
  return 0;
}

int RunTrain(const CommonFlags& f, const std::string& val, const std::string& stage) {
  bpnp::ExperimentSpec spec = BuildSpec(f);
  if (!val.empty()) spec.val_dataset = val;
  bpnp::Require(stage == "1" || stage == "2" || stage == "all", ErrorKind::kConfiguration,
                "--stage must be 1, 2 or all");
  spec.Validate(true, stage == "2");
  std::optional<bpnp::Pipeline> pipe;
  if (stage == "2") {
    pipe.emplace(bpnp::Pipeline::Load(spec.checkpoint));
    bpnp::Require(pipe->stage() >= 1, ErrorKind::kConfiguration,
                  "stage 2 needs a stage-1 checkpoint");
  } else {
    pipe.emplace(spec.LoadPipelineConfig());
  }
  auto train = bpnp::ReadDataset(spec.dataset).scenes;
  if (spec.max_samples > 0 && train.size() > spec.max_samples) train.resize(spec.max_samples);
  std::vector<bpnp::SceneSample> valset;
  if (!spec.val_dataset.empty()) valset = bpnp::ReadDataset(spec.val_dataset).scenes;

  std::filesystem::create_directories(spec.out_dir);
  std::ofstream log(spec.out_dir / "train_log.jsonl", std::ios::trunc);
  bpnp::Require(log.good(), ErrorKind::kIo, "cannot write training log");
  bpnp::TrainHooks hooks;
  hooks.log = &log;
  hooks.checkpoint = spec.out_dir / "pipeline.ckpt";
  if (stage == "1" || stage == "all") bpnp::TrainStage1(*pipe, train, valset, hooks);
  if (stage == "2" || stage == "all") bpnp::TrainStage2(*pipe, train, valset, hooks);
  pipe->Save(hooks.checkpoint);
  std::ofstream(spec.out_dir / "pipeline.json") << pipe->config().ToJson().dump(2) << "\n";
  std::cout << "checkpoint " << hooks.checkpoint.string() << "\n";
  return 0;
}

int RunEval(const CommonFlags& f, bool no_refiner) {
  bpnp::ExperimentSpec spec = BuildSpec(f);
  if (no_refiner) spec.use_refiner = false;
  const bpnp::MetricsReport rep = bpnp::RunEval(spec);
  bpnp::WriteReport(spec.out_dir, rep);
  std::printf("rotation median %.6g deg, translation median %.6g, %zu samples\n",
              rep.rot_quartiles.median, rep.trans_quartiles.median, rep.rot_errors.size());
  return 0;
}

int RunSweep(const CommonFlags& f, const std::vector<double>& ratios) {
  bpnp::ExperimentSpec spec = BuildSpec(f);
  if (!ratios.empty()) spec.outlier_ratios = ratios;
  const bpnp::SweepReport rep = bpnp::RunOutlierSweep(spec);
  bpnp::WriteSweepReport(spec.out_dir, rep);
  for (const auto& r : rep.rows) {
    std::printf("nu=%-6g %-5s median rot %.6g deg, trans %.6g\n", r.ratio, r.mode.c_str(),
                r.median_rot, r.median_trans);
  }
  return 0;
}

int RunBaseline(const CommonFlags& f, std::optional<std::uint64_t> budget) {
  bpnp::ExperimentSpec spec = BuildSpec(f);
  if (budget) spec.baseline_budget = *budget;
  const bpnp::MetricsReport rep = bpnp::RunBaselineRandomRansac(spec);
  bpnp::WriteReport(spec.out_dir, rep);
  std::printf("all-inlier hypothesis rate %.6g (predicted %.6g), scene success %.6g\n",
              rep.extra["empirical_hypothesis_rate"].get<double>(),
              rep.extra["predicted_hypothesis_rate"].get<double>(),
              rep.extra["scene_success_ratio"].get<double>());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind PnP pipeline and benchmark"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string protocol, shape, val, stage = "all";
  std::optional<std::size_t> count, points;
  std::optional<double> noise, outliers;
  std::optional<std::uint64_t> budget;
  std::vector<double> ratios;
  bool no_refiner = false;

  auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
  AddCommon(datagen, flags);
  datagen->add_option("--protocol", protocol, "modelnet or nyu");
  datagen->add_option("--count", count, "number of scenes");
  datagen->add_option("--points", points, "points per scene");
  datagen->add_option("--noise", noise, "pixel noise sigma");
  datagen->add_option("--outlier-ratio", outliers, "outliers per point set, as a fraction");
  datagen->add_option("--shape", shape, "mixed, cube, sphere or clusters");

  auto* train = app.add_subcommand("train", "train stage 1, stage 2 or both");
  AddCommon(train, flags);
  train->add_option("--val-dataset", val, "held-out dataset for per-epoch metrics");
  train->add_option("--stage", stage, "1, 2 or all");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  AddCommon(eval, flags);
  eval->add_flag("--no-refiner", no_refiner, "skip the match classifier");

  auto* sweep = app.add_subcommand("sweep", "outlier-ratio sweep");
  AddCommon(sweep, flags);
  sweep->add_option("--ratios", ratios, "outlier ratios")->delimiter(',');

  auto* baseline = app.add_subcommand("baseline", "P3P-RANSAC on random correspondences");
  AddCommon(baseline, flags);
  baseline->add_option("--budget", budget, "hypotheses per scene");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*datagen) return RunDatagen(flags, protocol, count, points, noise, outliers, shape);
    if (*train) return RunTrain(flags, val, stage);
    if (*eval) return RunEval(flags, no_refiner);
    if (*sweep) return RunSweep(flags, ratios);
    if (*baseline) return RunBaseline(flags, budget);
  } catch (const bpnp::Error& e) {
    std::cerr << "error (" << bpnp::ErrorKindName(e.kind()) << "): " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kConfiguration:
      case ErrorKind::kInvalidInput:
        return kExitConfig;
      case ErrorKind::kNumericFailure:
        return kExitNumeric;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
