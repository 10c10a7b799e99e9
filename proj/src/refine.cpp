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

#include "bpnp/refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bpnp/error.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

void RefinerConfig::Validate() const {
  Require(width >= 1 && blocks >= 1, ErrorKind::kConfiguration,
          "refiner width and blocks must be >= 1");
}

nlohmann::json RefinerConfig::ToJson() const {
  return {{"width", width}, {"blocks", blocks}, {"use_match_weight", use_match_weight},
          {"init_bias", init_bias}, {"seed", seed}};
}

RefinerConfig RefinerConfig::FromJson(const nlohmann::json& j) {
  RefinerConfig c;
  c.width = j.value("width", c.width);
  c.blocks = j.value("blocks", c.blocks);
  c.use_match_weight = j.value("use_match_weight", c.use_match_weight);
  c.init_bias = j.value("init_bias", c.init_bias);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

Matrix MatchFeatures(std::span<const Match> matches, const PointSet3D& x3d,
                     const PointSet2D& y2d, const Matrix* W) {
  Require(y2d.frame == Frame::kNormalized, ErrorKind::kInvalidInput,
          "match features need normalized 2D points");
  Matrix f(matches.size(), W != nullptr ? 6 : 5);
  for (std::size_t k = 0; k < matches.size(); ++k) {
    const auto& m = matches[k];
    Require(m.i3d < x3d.size() && m.i2d < y2d.size(), ErrorKind::kInvalidInput,
            "match index out of range");
    const auto& x = x3d.points[m.i3d];
    const auto& y = y2d.points[m.i2d];
    f(k, 0) = x.x();
    f(k, 1) = x.y();
    f(k, 2) = x.z();
    f(k, 3) = y.x();
    f(k, 4) = y.y();
    if (W != nullptr) f(k, 5) = static_cast<double>(W->size()) * (*W)(m.i3d, m.i2d);
  }
  return f;
}

Refiner::Refiner(const RefinerConfig& cfg) : cfg_(cfg) {
  cfg_.Validate();
  std::mt19937_64 rng(cfg_.seed);
  lift_ = Linear::Create(params_, "refiner/lift", cfg_.input_dim(), cfg_.width, rng);
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    const std::string p = "refiner/block" + std::to_string(b);
    linear_.push_back(Linear::Create(params_, p + "/linear", cfg_.width, cfg_.width, rng));
    affine_.push_back(ChannelAffine::Create(params_, p + "/affine", cfg_.width));
  }
  head_ = Linear::Create(params_, "refiner/head", cfg_.width, 1, rng);
  params_[head_.bias].value[0] = cfg_.init_bias;
}

std::vector<double> Refiner::Logits(const Matrix& features, Cache* cache) const {
  Require(features.cols() == cfg_.input_dim(), ErrorKind::kInvalidInput,
          "refiner input width mismatch");
  Require(features.rows() >= 2, ErrorKind::kInvalidInput, "refiner needs >= 2 matches");
  Require(AllFinite(features), ErrorKind::kInvalidInput, "non-finite match features");
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c = Cache{};
  c.input = features;
  int layer = 0;
  c.lifted = lift_.Forward(params_, features);
  CheckLayer(c.lifted, layer++);
  Matrix o = c.lifted;
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    c.block_in.push_back(o);
    c.linear_out.push_back(linear_[b].Forward(params_, o));
    CheckLayer(c.linear_out.back(), layer++);
    c.cn.emplace_back();
    const Matrix n = ContextNormalize(c.linear_out.back(), &c.cn.back());
    c.affine_out.push_back(affine_[b].Forward(params_, n));
    AddInPlace(o, Relu(c.affine_out.back()));
    CheckLayer(o, layer++);
  }
  c.trunk = o;
  const Matrix logits = head_.Forward(params_, o);
  CheckLayer(logits, layer);
  c.logits = logits.values();
  c.valid = true;
  return c.logits;
}

std::vector<double> Refiner::Classify(const Matrix& features, Cache* cache) const {
  std::vector<double> w = Logits(features, cache);
  for (double& v : w) v = WeightFromLogit(v);
  return w;
}

void Refiner::Backward(const Cache& c, std::span<const double> dweights) {
  Require(c.valid, ErrorKind::kContractViolation, "refiner backward without forward cache");
  Require(dweights.size() == c.logits.size(), ErrorKind::kInvalidInput,
          "refiner gradient length mismatch");
  Matrix dlogit(c.logits.size(), 1);
  for (std::size_t k = 0; k < c.logits.size(); ++k) {
    if (c.logits[k] > 0.0) {
      const double t = std::tanh(c.logits[k]);
      dlogit(k, 0) = dweights[k] * (1.0 - t * t);
    }
  }
  Matrix d = head_.Backward(params_, c.trunk, dlogit);
  for (std::size_t bi = cfg_.blocks; bi-- > 0;) {
    const Matrix da = ReluBackward(c.affine_out[bi], d);
    const Matrix dn = affine_[bi].Backward(params_, c.cn[bi].y, da);
    const Matrix dl = ContextNormalizeBackward(c.cn[bi], dn);
    AddInPlace(d, linear_[bi].Backward(params_, c.block_in[bi], dl));
  }
  lift_.Backward(params_, c.input, d);
}

RefinerSampleResult RefinerSampleLoss(Refiner& refiner, const RefinerSample& s,
                                      bool accumulate, double min_gap) {
  RefinerSampleResult out;
  Refiner::Cache cache;
  out.weights = refiner.Classify(s.features, accumulate ? &cache : nullptr);
  DltResult dlt;
  try {
    dlt = WeightedDlt(s.x, s.y, out.weights, min_gap);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateGeometry) throw;
    out.skipped = true;
    return out;
  }
  Eigen::Matrix3d dR;
  Eigen::Vector3d dt;
  out.loss = PoseLoss(dlt.R, dlt.t, s.pose_gt.R, s.pose_gt.t, &dR, &dt);
  if (accumulate) {
    const std::vector<double> dw = WeightedDltBackward(dlt, s.x, s.y, dR, dt);
    for (double v : dw) {
      if (!std::isfinite(v)) {
        out.skipped = true;
        return out;
      }
    }
    refiner.Backward(cache, dw);
  }
  return out;
}

nlohmann::json RefinerTrainConfig::ToJson() const {
  return {{"epochs", epochs}, {"batch", batch}, {"lr", adam.lr}, {"seed", seed},
          {"min_gap", min_gap}};
}

RefinerTrainConfig RefinerTrainConfig::FromJson(const nlohmann::json& j) {
  RefinerTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.seed = j.value("seed", c.seed);
  c.min_gap = j.value("min_gap", c.min_gap);
  Require(c.epochs >= 0 && c.batch >= 1 && c.adam.lr > 0.0, ErrorKind::kConfiguration,
          "invalid refiner training config");
  return c;
}

namespace {

double InlierRatio(const std::vector<bool>& inlier, const std::vector<double>* w) {
  std::size_t kept = 0, good = 0;
  for (std::size_t k = 0; k < inlier.size(); ++k) {
    if (w != nullptr && !((*w)[k] > 0.0)) continue;
    ++kept;
    if (inlier[k]) ++good;
  }
  if (w != nullptr && kept < 4) return InlierRatio(inlier, nullptr);
  return kept == 0 ? 0.0 : static_cast<double>(good) / static_cast<double>(kept);
}

}  // namespace

RefinerEpoch EvaluateRefiner(Refiner& refiner, std::span<const RefinerSample> samples,
                             double min_gap) {
  RefinerEpoch e;
  std::size_t used = 0;
  for (const auto& s : samples) {
    const RefinerSampleResult r = RefinerSampleLoss(refiner, s, false, min_gap);
    e.val_inlier_ratio_before += InlierRatio(s.inlier, nullptr);
    e.val_inlier_ratio_after += InlierRatio(s.inlier, &r.weights);
    if (r.skipped) {
      ++e.skipped;
      continue;
    }
    e.val_loss += r.loss;
    ++used;
  }
  if (used > 0) e.val_loss /= static_cast<double>(used);
  if (!samples.empty()) {
    e.val_inlier_ratio_before /= static_cast<double>(samples.size());
    e.val_inlier_ratio_after /= static_cast<double>(samples.size());
  }
  return e;
}

std::vector<RefinerEpoch> TrainRefiner(Refiner& refiner, std::span<const RefinerSample> train,
                                       std::span<const RefinerSample> val,
                                       const RefinerTrainConfig& cfg,
                                       const std::function<void(const RefinerEpoch&)>& on_epoch) {
  Require(!train.empty(), ErrorKind::kInvalidInput, "refiner training set is empty");
  std::vector<RefinerEpoch> log;
  RefinerEpoch e0 = EvaluateRefiner(refiner, val, cfg.min_gap);
  log.push_back(e0);
  if (on_epoch) on_epoch(e0);
  AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t used = 0, skipped = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      refiner.params().ZeroGrad();
      std::size_t in_batch = 0;
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      for (std::size_t b = start; b < stop; ++b) {
        const RefinerSampleResult r = RefinerSampleLoss(refiner, train[order[b]], true, cfg.min_gap);
        if (r.skipped) {
          ++skipped;
          continue;
        }
        total += r.loss;
        ++used;
        ++in_batch;
      }
      if (in_batch > 0) AdamStep(refiner.params(), adam, cfg.adam);
    }
    RefinerEpoch e = EvaluateRefiner(refiner, val, cfg.min_gap);
    e.epoch = epoch;
    e.train_loss = used > 0 ? total / static_cast<double>(used) : 0.0;
    e.skipped += skipped;
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

}  // namespace bpnp
