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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "bpnp/geometry.hpp"
#include "bpnp/otmatch.hpp"

namespace bpnp {

// ---------------------------------------------------------------------------
// Weighted DLT

using Vector12d = Eigen::Matrix<double, 12, 1>;
using Matrix12d = Eigen::Matrix<double, 12, 12>;

// The two rows contributed by one match (x, y) with x_h = (x, 1):
//   [ 0,   -x_h,  v x_h ]
//   [ x_h,  0,   -u x_h ]
// against p = [R1 t1 R2 t2 R3 t3].
std::array<Vector12d, 2> DltRows(const Eigen::Vector3d& x, const Eigen::Vector2d& y_norm);

struct DltResult {
  Eigen::Matrix3d R;  // not orthogonalised, |R|_F = sqrt(3)
  Eigen::Vector3d t;
  Vector12d p;                 // scaled solution
  Vector12d u;                 // unit eigenvector
  Eigen::Matrix<double, 12, 1> eigenvalues;  // ascending
  Matrix12d eigenvectors;      // columns, matching eigenvalues
  double relative_gap = 0.0;   // (lambda_1 - lambda_0) / lambda_11
};

// Smallest eigenvector of A^T diag(w) A. Needs at least six strictly
// positive weights; throws kDegenerateGeometry when the relative spectral
// gap falls below `min_gap`.
DltResult WeightedDlt(std::span<const Eigen::Vector3d> x3d,
                      std::span<const Eigen::Vector2d> y2d_norm,
                      std::span<const double> w, double min_gap = 1e-12);

// dL/dw given dL/dR and dL/dt of a WeightedDlt result, through the scale
// fix and the eigenvector perturbation formula.
std::vector<double> WeightedDltBackward(const DltResult& dlt,
                                        std::span<const Eigen::Vector3d> x3d,
                                        std::span<const Eigen::Vector2d> y2d_norm,
                                        const Eigen::Matrix3d& dR,
                                        const Eigen::Vector3d& dt);

// Flips (R, t) so that most points lie in front of the camera, then projects
// R to the nearest rotation.
Pose DltToPose(const DltResult& dlt, std::span<const Eigen::Vector3d> x3d);

// min(|R - R_gt|_F^2, |R + R_gt|_F^2) + min(|t - t_gt|^2, |t + t_gt|^2).
// Optional gradients with respect to R and t.
double PoseLoss(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                const Eigen::Matrix3d& R_gt, const Eigen::Vector3d& t_gt,
                Eigen::Matrix3d* dR = nullptr, Eigen::Vector3d* dt = nullptr);

// ---------------------------------------------------------------------------
// P3P

// Real roots of a4 x^4 + ... + a0 (a4 != 0), each polished by Newton.
// Ferrari's method, with a companion-matrix fallback when the closed form
// loses accuracy.
std::vector<double> SolveQuartic(double a4, double a3, double a2, double a1, double a0);

// Grunert's solution for three world points and their unit bearings. Returns
// at most four poses. Throws kNoSolution for collinear points.
std::vector<Pose> P3PCandidates(const std::array<Eigen::Vector3d, 3>& x,
                                const std::array<Eigen::Vector3d, 3>& bearings);

// Candidate with the smallest angular residual on the fourth match. Throws
// kNoSolution when no candidate exists.
Pose P3P(const std::array<Eigen::Vector3d, 4>& x,
         const std::array<Eigen::Vector2d, 4>& y_norm);

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

struct LmOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-10;
  double step_tol = 1e-12;
};

struct LmReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;  // cost after every accepted step
};

// Chordal cost sum_k |N(R x_k + t) - N(y_k, 1)|^2, which equals twice the
// summed angular residual.
double ChordalCost(const Pose& pose, std::span<const Eigen::Vector3d> x3d,
                   std::span<const Eigen::Vector2d> y2d_norm);

// Minimises ChordalCost over a left axis-angle increment and a translation
// increment. Needs >= 3 correspondences; the result never has a higher cost
// than pose0.
Pose LmRefine(const Pose& pose0, std::span<const Eigen::Vector3d> x3d,
              std::span<const Eigen::Vector2d> y2d_norm, const LmOptions& opt = {},
              LmReport* report = nullptr);

// ---------------------------------------------------------------------------
// RANSAC

// ceil(log(1 - p) / log(1 - w^q)); 1 when w^q >= 1. Saturates at UINT64_MAX.
std::uint64_t RansacIterations(double p, double w, int q);

// 1 - (1 - w^q)^B: probability that at least one of B samples is all-inlier.
double RansacSuccessProbability(double w, int q, double budget);

// Fraction of the iteration count demanded by confidence p that a budget of
// B hypotheses covers, B / RansacIterations(p, w, q).
double RansacBudgetCoverage(double budget, double p, double w, int q);

struct RansacConfig {
  double confidence = 0.99;
  double threshold = 0.01;  // ray angle, radians
  std::uint64_t max_iterations = 100000;
  double max_runtime_s = 0.0;  // 0 disables the wall-clock limit
  std::uint64_t seed = 0;
  bool refine = true;

  void Validate() const;
  nlohmann::json ToJson() const;
  static RansacConfig FromJson(const nlohmann::json& j);
};

struct PoseEstimate {
  Pose pose;
  std::vector<std::uint32_t> inliers;  // indices into the match list
  double mean_residual = 0.0;          // ray angle over inliers, radians
  double max_residual = 0.0;
  bool consensus = false;
  std::uint64_t iterations = 0;
  bool timed_out = false;

  bool operator==(const PoseEstimate&) const = default;
};

// Hypothesise from 4-match samples, score by inlier count then mean
// residual then hypothesis index, refit on the inliers with LmRefine.
// consensus is false when no hypothesis reached four inliers; the pose is
// then the best effort.
PoseEstimate RansacP3P(std::span<const Match> matches, const PointSet3D& x3d,
                       const PointSet2D& y2d_norm, const RansacConfig& cfg);

}  // namespace bpnp
