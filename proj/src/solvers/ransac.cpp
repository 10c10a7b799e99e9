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

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "bpnp/error.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

std::uint64_t RansacIterations(double p, double w, int q) {
  Require(p > 0.0 && p < 1.0, ErrorKind::kInvalidInput, "confidence must be in (0, 1)");
  Require(w > 0.0 && w <= 1.0, ErrorKind::kInvalidInput, "inlier ratio must be in (0, 1]");
  Require(q >= 1, ErrorKind::kInvalidInput, "sample size must be >= 1");
  const double wq = std::pow(w, q);
  if (wq >= 1.0) return 1;
  const double k = std::ceil(std::log1p(-p) / std::log1p(-wq));
  if (!(k < 1.8e19)) return std::numeric_limits<std::uint64_t>::max();
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(k));
}

double RansacSuccessProbability(double w, int q, double budget) {
  Require(w >= 0.0 && w <= 1.0 && q >= 1 && budget >= 0.0, ErrorKind::kInvalidInput,
          "invalid success-probability arguments");
  const double wq = std::pow(w, q);
  if (wq >= 1.0) return budget > 0.0 ? 1.0 : 0.0;
  return -std::expm1(budget * std::log1p(-wq));
}

double RansacBudgetCoverage(double budget, double p, double w, int q) {
  Require(budget >= 0.0, ErrorKind::kInvalidInput, "budget must be >= 0");
  return budget / static_cast<double>(RansacIterations(p, w, q));
}

void RansacConfig::Validate() const {
  Require(confidence > 0.0 && confidence < 1.0, ErrorKind::kConfiguration,
          "ransac confidence must be in (0, 1)");
  Require(threshold > 0.0, ErrorKind::kConfiguration, "ransac threshold must be > 0");
  Require(max_iterations >= 1, ErrorKind::kConfiguration, "ransac max_iterations must be >= 1");
  Require(max_runtime_s >= 0.0, ErrorKind::kConfiguration, "ransac max_runtime_s must be >= 0");
}

nlohmann::json RansacConfig::ToJson() const {
  return {{"confidence", confidence}, {"threshold", threshold},
          {"max_iterations", max_iterations}, {"max_runtime_s", max_runtime_s},
          {"seed", seed}, {"refine", refine}};
}

RansacConfig RansacConfig::FromJson(const nlohmann::json& j) {
  RansacConfig c;
  c.confidence = j.value("confidence", c.confidence);
  c.threshold = j.value("threshold", c.threshold);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.max_runtime_s = j.value("max_runtime_s", c.max_runtime_s);
  c.seed = j.value("seed", c.seed);
  c.refine = j.value("refine", c.refine);
  c.Validate();
  return c;
}

namespace {

struct Score {
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::infinity();

  bool BetterThan(const Score& o) const {
    if (count != o.count) return count > o.count;
    return mean < o.mean;
  }
};

Score Evaluate(const Pose& pose, const std::vector<Eigen::Vector3d>& x,
               const std::vector<Eigen::Vector2d>& y, double tau,
               std::vector<std::uint32_t>* inliers, double* max_res) {
  Score s;
  double sum = 0.0, mx = 0.0;
  if (inliers != nullptr) inliers->clear();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double a = RayAngle(pose, x[k], y[k]);
    if (a < tau) {
      ++s.count;
      sum += a;
      mx = std::max(mx, a);
      if (inliers != nullptr) inliers->push_back(static_cast<std::uint32_t>(k));
    }
  }
  if (s.count > 0) s.mean = sum / static_cast<double>(s.count);
  if (max_res != nullptr) *max_res = mx;
  return s;
}

}  // namespace

PoseEstimate RansacP3P(std::span<const Match> matches, const PointSet3D& x3d,
                       const PointSet2D& y2d, const RansacConfig& cfg) {
  cfg.Validate();
  Require(y2d.frame == Frame::kNormalized, ErrorKind::kInvalidInput,
          "RANSAC expects normalized 2D points");
  const std::size_t n = matches.size();
  Require(n >= 4, ErrorKind::kInvalidInput, "RANSAC needs at least four matches");
  std::vector<Eigen::Vector3d> x(n);
  std::vector<Eigen::Vector2d> y(n);
  for (std::size_t k = 0; k < n; ++k) {
    Require(matches[k].i3d < x3d.size() && matches[k].i2d < y2d.size(),
            ErrorKind::kInvalidInput, "match index out of range");
    x[k] = x3d.points[matches[k].i3d];
    y[k] = y2d.points[matches[k].i2d];
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const auto start = std::chrono::steady_clock::now();
  PoseEstimate est;
  Score best;
  bool have_pose = false;
  std::uint64_t needed = cfg.max_iterations;
  std::uint64_t it = 0;
  for (; it < needed; ++it) {
    if (cfg.max_runtime_s > 0.0 && (it & 63u) == 0 && it > 0) {
      const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
      if (el.count() > cfg.max_runtime_s) {
        est.timed_out = true;
        break;
      }
    }
    std::array<std::size_t, 4> idx;
    for (int s = 0; s < 4; ++s) {
      bool fresh;
      do {
        idx[s] = pick(rng);
        fresh = true;
        for (int r = 0; r < s; ++r) fresh = fresh && idx[r] != idx[s];
      } while (!fresh);
    }
    Pose hyp;
    try {
      hyp = P3P({x[idx[0]], x[idx[1]], x[idx[2]], x[idx[3]]},
                {y[idx[0]], y[idx[1]], y[idx[2]], y[idx[3]]});
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNoSolution || e.kind() == ErrorKind::kDegenerateGeometry ||
          e.kind() == ErrorKind::kInvalidInput) {
        continue;
      }
      throw;
    }
    const Score s = Evaluate(hyp, x, y, cfg.threshold, nullptr, nullptr);
    if (!have_pose || s.BetterThan(best)) {
      best = s;
      est.pose = hyp;
      have_pose = true;
      if (s.count >= 4) {
        needed = std::min(cfg.max_iterations,
                          RansacIterations(cfg.confidence,
                                           static_cast<double>(s.count) / static_cast<double>(n), 4));
      }
    }
  }
  est.iterations = std::min(it, needed);
  if (!have_pose) {
    est.consensus = false;
    return est;
  }
  est.consensus = best.count >= 4;
  if (est.consensus && cfg.refine) {
    Pose pose = est.pose;
    std::vector<std::uint32_t> in;
    Score current = best;
    Evaluate(pose, x, y, cfg.threshold, &in, nullptr);
    for (int round = 0; round < 2 && in.size() >= 4; ++round) {
      std::vector<Eigen::Vector3d> xi;
      std::vector<Eigen::Vector2d> yi;
      for (auto k : in) {
        xi.push_back(x[k]);
        yi.push_back(y[k]);
      }
      const Pose refined = LmRefine(pose, xi, yi);
      std::vector<std::uint32_t> next;
      const Score s = Evaluate(refined, x, y, cfg.threshold, &next, nullptr);
      if (s.count < current.count) break;
      pose = refined;
      current = s;
      in = std::move(next);
    }
    est.pose = pose;
  }
  Score final = Evaluate(est.pose, x, y, cfg.threshold, &est.inliers, &est.max_residual);
  est.mean_residual = final.count > 0 ? final.mean : 0.0;
  est.consensus = final.count >= 4;
  return est;
}

}  // namespace bpnp
