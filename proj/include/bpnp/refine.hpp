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
#include <functional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "bpnp/geometry.hpp"
#include "bpnp/layers.hpp"
#include "bpnp/matrix.hpp"
#include "bpnp/otmatch.hpp"
#include "bpnp/params.hpp"

namespace bpnp {

struct RefinerConfig {
  std::size_t width = 128;
  std::size_t blocks = 6;
  // Append the matcher weight as a sixth input channel, scaled by M*N so the
  // uniform plan maps to 1.
  bool use_match_weight = false;
  double init_bias = 0.5;
  std::uint64_t seed = 2;

  std::size_t input_dim() const { return use_match_weight ? 6 : 5; }
  void Validate() const;
  nlohmann::json ToJson() const;
  static RefinerConfig FromJson(const nlohmann::json& j);
};

// Rows (x, y, z, u, v[, M N W_ij]) for every match, 2D in normalized
// coordinates.
Matrix MatchFeatures(std::span<const Match> matches, const PointSet3D& x3d,
                     const PointSet2D& y2d_norm, const Matrix* W = nullptr);

// Per-match inlier classifier: lift to `width` channels, `blocks` residual
// blocks o += ReLU(Affine(ContextNorm(Linear(o)))), a scalar logit per match
// and w = max(0, tanh(logit)). Parameters live under "refiner/".
class Refiner {
 public:
  explicit Refiner(const RefinerConfig& cfg);

  struct Cache {
    bool valid = false;
    Matrix input;
    Matrix lifted;
    std::vector<Matrix> block_in;
    std::vector<Matrix> linear_out;
    std::vector<ContextNormCache> cn;
    std::vector<Matrix> affine_out;
    Matrix trunk;
    std::vector<double> logits;
  };

  std::vector<double> Logits(const Matrix& features, Cache* cache = nullptr) const;
  std::vector<double> Classify(const Matrix& features, Cache* cache = nullptr) const;
  // Accumulates parameter gradients from dL/dw.
  void Backward(const Cache& cache, std::span<const double> dweights);

  const RefinerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  RefinerConfig cfg_;
  ParamStore params_;
  Linear lift_;
  std::vector<Linear> linear_;
  std::vector<ChannelAffine> affine_;
  Linear head_;
};

inline double WeightFromLogit(double logit) { return logit > 0.0 ? std::tanh(logit) : 0.0; }

// One training example: a putative match list with its coordinates and the
// ground-truth pose.
struct RefinerSample {
  Matrix features;
  std::vector<Eigen::Vector3d> x;
  std::vector<Eigen::Vector2d> y;  // normalized
  std::vector<bool> inlier;
  Pose pose_gt;
};

struct RefinerSampleResult {
  double loss = 0.0;
  bool skipped = false;
  std::vector<double> weights;
};

// Pose loss of the weighted DLT solution for one sample. With `accumulate`
// the gradient is backpropagated into the refiner's buffers. Samples with
// fewer than six positive weights or a relative spectral gap below
// `min_gap` are reported as skipped.
RefinerSampleResult RefinerSampleLoss(Refiner& refiner, const RefinerSample& sample,
                                      bool accumulate, double min_gap = 1e-8);

struct RefinerTrainConfig {
  int epochs = 20;
  std::size_t batch = 12;
  AdamOptions adam{1e-4, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 3;
  double min_gap = 1e-8;

  nlohmann::json ToJson() const;
  static RefinerTrainConfig FromJson(const nlohmann::json& j);
};

struct RefinerEpoch {
  int epoch = 0;  // 0 is the untrained evaluation
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::size_t skipped = 0;
  double val_inlier_ratio_before = 0.0;
  double val_inlier_ratio_after = 0.0;
};

// Mean pose loss and mean kept-inlier ratio over a sample set.
RefinerEpoch EvaluateRefiner(Refiner& refiner, std::span<const RefinerSample> samples,
                             double min_gap);

// Adam over shuffled mini-batches; the per-epoch callback receives the
// evaluation on `val` (epoch 0 before any update).
std::vector<RefinerEpoch> TrainRefiner(Refiner& refiner, std::span<const RefinerSample> train,
                                       std::span<const RefinerSample> val,
                                       const RefinerTrainConfig& cfg,
                                       const std::function<void(const RefinerEpoch&)>& on_epoch = {});

}  // namespace bpnp
