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
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpnp/datagen.hpp"
#include "bpnp/featnet.hpp"
#include "bpnp/otmatch.hpp"
#include "bpnp/params.hpp"
#include "bpnp/refine.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

struct MatcherConfig {
  double lambda = 0.1;
  int iters = 20;
  std::size_t top_k = 2000;  // clipped to M*N
};

struct Stage1Config {
  int max_epochs = 50;
  std::size_t batch = 12;
  AdamOptions adam{};
  std::uint64_t seed = 4;
  // Stop once the relative improvement of the epoch loss over the last
  // `window` epochs drops below `tol`.
  int convergence_window = 5;
  double convergence_tol = 1e-3;
  double triplet_alpha = 10.0;
  // Validation Top-K used for the logged inlier count.
  std::size_t val_top_k = 200;
};

struct PipelineConfig {
  FeatureNetConfig featnet;
  MatcherConfig matcher;
  RefinerConfig refiner;
  RansacConfig ransac;
  LossKind loss = LossKind::kJointProbability;
  Stage1Config stage1;
  RefinerTrainConfig stage2;
  // Length of the Top-K_w list handed to the refiner.
  std::size_t refiner_top_k = 200;
  bool use_refiner = true;

  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; unknown enum names and invalid values
  // throw kConfiguration.
  static PipelineConfig FromJson(const nlohmann::json& j);
};

// Both parameter sets plus the configuration that shaped them.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);

  const PipelineConfig& config() const { return cfg_; }
  PipelineConfig& mutable_config() { return cfg_; }
  FeatureNet& featnet() { return featnet_; }
  const FeatureNet& featnet() const { return featnet_; }
  Refiner& refiner() { return refiner_; }
  const Refiner& refiner() const { return refiner_; }
  int stage() const { return stage_; }
  void set_stage(int s) { stage_ = s; }

  void Save(const std::filesystem::path& path) const;
  static Pipeline Load(const std::filesystem::path& path);

 private:
  PipelineConfig cfg_;
  FeatureNet featnet_;
  Refiner refiner_;
  int stage_ = 0;  // highest completed training stage
};

struct MatchScores {
  Matrix f3d;
  Matrix f2d;
  Matrix H;
  Matrix W;
};

MatchScores ComputeScores(const FeatureNet& net, const MatcherConfig& m,
                          const SceneSample& scene);
// Cost and weight matrices from given features.
MatchScores ScoresFromFeatures(Matrix f3d, Matrix f2d, const MatcherConfig& m);

struct InferOptions {
  bool use_refiner = true;
  std::optional<std::size_t> top_k;  // defaults to the pipeline's top_k
};

struct InferResult {
  PoseEstimate estimate;
  MatchList candidates;  // Top-K_w list
  MatchList filtered;    // refiner survivors (or candidates on fallback)
  std::vector<double> weights;  // refiner weights parallel to candidates
  bool fallback = false;
  double seconds_features = 0.0;
  double seconds_matching = 0.0;
  double seconds_refine = 0.0;
  double seconds_pose = 0.0;
};

// The scene's pose is never read.
InferResult Infer(const Pipeline& pipe, const SceneSample& scene, const InferOptions& opt = {});
// Same path starting from features; `refiner` may be null.
InferResult InferFromScores(const PipelineConfig& cfg, const Refiner* refiner,
                            const SceneSample& scene, const MatchScores& scores,
                            const InferOptions& opt = {});

// Loss and gradient of one scene; gradients accumulate into the network.
double Stage1SampleLoss(FeatureNet& net, const PipelineConfig& cfg, const SceneSample& scene,
                        Rng& rng, bool accumulate);

struct Stage1Epoch {
  int epoch = 0;
  double loss = 0.0;        // mean training loss (epoch 0: before updates)
  double val_inliers = 0.0;  // mean Top-K_w inlier count on the validation set
  double val_inliers_f = 0.0;
  bool converged = false;
};

struct TrainHooks {
  std::ostream* log = nullptr;  // line-delimited JSON, one record per epoch
  std::filesystem::path checkpoint;  // written after every epoch when set
  std::function<void(const Stage1Epoch&)> on_epoch;
};

double MeanTopKInliers(const FeatureNet& net, const MatcherConfig& m,
                       std::span<const SceneSample> scenes, std::size_t K,
                       RetrievalStrategy strategy = RetrievalStrategy::kTopKW);

// Adam over shuffled batches of the selected loss; the batch loss is the sum
// of per-sample losses. A NumericError aborts training and leaves the last
// checkpoint untouched.
std::vector<Stage1Epoch> TrainStage1(Pipeline& pipe, std::span<const SceneSample> train,
                                     std::span<const SceneSample> val,
                                     const TrainHooks& hooks = {});

// Refiner example from the frozen matcher: Top-K_w list, rows sorted
// lexicographically by their features so the example does not depend on
// the order of the input point sets.
RefinerSample BuildRefinerSample(const Pipeline& pipe, const SceneSample& scene);

// Trains the refiner on frozen stage-1 features.
std::vector<RefinerEpoch> TrainStage2(Pipeline& pipe, std::span<const SceneSample> train,
                                      std::span<const SceneSample> val,
                                      const TrainHooks& hooks = {});

}  // namespace bpnp
