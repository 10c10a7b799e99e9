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

#include <cmath>

#include <Eigen/Cholesky>

#include "bpnp/error.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

namespace {

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

}  // namespace

double ChordalCost(const Pose& pose, std::span<const Eigen::Vector3d> x3d,
                   std::span<const Eigen::Vector2d> y2d) {
  double cost = 0.0;
  for (std::size_t k = 0; k < x3d.size(); ++k) {
    const Eigen::Vector3d z = pose.Transform(x3d[k]);
    const double n = z.norm();
    if (n == 0.0) Fail(ErrorKind::kDegenerateGeometry, "point maps to the camera centre");
    const Eigen::Vector3d ray = Eigen::Vector3d(y2d[k].x(), y2d[k].y(), 1.0).normalized();
    cost += (z / n - ray).squaredNorm();
  }
  return cost;
}

Pose LmRefine(const Pose& pose0, std::span<const Eigen::Vector3d> x3d,
              std::span<const Eigen::Vector2d> y2d, const LmOptions& opt, LmReport* report) {
  Require(x3d.size() == y2d.size(), ErrorKind::kInvalidInput, "LM inputs differ in length");
  Require(x3d.size() >= 3, ErrorKind::kInvalidInput, "LM needs at least three points");
  Require(pose0.IsRotationValid(1e-6), ErrorKind::kInvalidInput, "LM initial pose is invalid");

  std::vector<Eigen::Vector3d> rays(y2d.size());
  for (std::size_t k = 0; k < y2d.size(); ++k) {
    rays[k] = Eigen::Vector3d(y2d[k].x(), y2d[k].y(), 1.0).normalized();
  }
  Pose pose = pose0;
  double cost = ChordalCost(pose, x3d, y2d);
  if (!std::isfinite(cost)) Fail(ErrorKind::kNumericFailure, "LM objective is not finite");
  LmReport local;
  local.initial_cost = cost;
  double mu = 1e-3;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t k = 0; k < x3d.size(); ++k) {
      const Eigen::Vector3d Rx = pose.R * x3d[k];
      const Eigen::Vector3d z = Rx + pose.t;
      const double n = z.norm();
      const Eigen::Vector3d dir = z / n;
      const Eigen::Matrix3d dN = (Eigen::Matrix3d::Identity() - dir * dir.transpose()) / n;
      Eigen::Matrix<double, 3, 6> J;
      J.leftCols<3>() = -dN * Skew(Rx);
      J.rightCols<3>() = dN;
      const Eigen::Vector3d r = dir - rays[k];
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * r;
    }
    if (Jtr.norm() < opt.gradient_tol) break;
    bool accepted = false;
    bool converged = false;
    while (mu < 1e12) {
      Eigen::Matrix<double, 6, 6> Aug = JtJ;
      Aug.diagonal().array() += mu * (1.0 + JtJ.diagonal().array());
      const Eigen::Matrix<double, 6, 1> step = -Aug.ldlt().solve(Jtr);
      if (!step.allFinite()) Fail(ErrorKind::kNumericFailure, "LM step is not finite");
      if (step.norm() < opt.step_tol) {
        converged = true;
        break;
      }
      Pose trial;
      trial.R = ExpSO3(step.head<3>()) * pose.R;
      trial.t = pose.t + step.tail<3>();
      const double trial_cost = ChordalCost(trial, x3d, y2d);
      if (!std::isfinite(trial_cost)) Fail(ErrorKind::kNumericFailure, "LM objective is not finite");
      if (trial_cost < cost) {
        pose = trial;
        cost = trial_cost;
        mu = std::max(mu * 0.1, 1e-12);
        accepted = true;
        local.cost_history.push_back(cost);
        break;
      }
      mu *= 10.0;
    }
    if (converged || !accepted) break;
  }
  local.iterations = it;
  local.final_cost = cost;
  if (report != nullptr) *report = std::move(local);
  return pose;
}

}  // namespace bpnp
