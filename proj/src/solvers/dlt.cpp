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

#include <Eigen/SVD>

#include "bpnp/error.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

namespace {

constexpr int kRotationSlots[9] = {0, 1, 2, 4, 5, 6, 8, 9, 10};

}  // namespace

std::array<Vector12d, 2> DltRows(const Eigen::Vector3d& x, const Eigen::Vector2d& y) {
  Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
  std::array<Vector12d, 2> rows;
  rows[0].setZero();
  rows[1].setZero();
  rows[0].segment<4>(4) = -xh;
  rows[0].segment<4>(8) = y.y() * xh;
  rows[1].segment<4>(0) = xh;
  rows[1].segment<4>(8) = -y.x() * xh;
  return rows;
}

DltResult WeightedDlt(std::span<const Eigen::Vector3d> x3d,
                      std::span<const Eigen::Vector2d> y2d,
                      std::span<const double> w, double min_gap) {
  const std::size_t K = x3d.size();
  Require(y2d.size() == K && w.size() == K, ErrorKind::kInvalidInput,
          "weighted DLT inputs differ in length");
  std::size_t positive = 0;
  for (double v : w) {
    Require(v >= 0.0 && std::isfinite(v), ErrorKind::kInvalidInput,
            "DLT weights must be finite and non-negative");
    if (v > 0.0) ++positive;
  }
  Require(positive >= 6, ErrorKind::kDegenerateGeometry,
          "weighted DLT needs at least six positive weights");

  Eigen::Matrix<double, Eigen::Dynamic, 12> A(2 * positive, 12);
  std::size_t r = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (w[k] <= 0.0) continue;
    const auto rows = DltRows(x3d[k], y2d[k]);
    const double s = std::sqrt(w[k]);
    A.row(r++) = s * rows[0].transpose();
    A.row(r++) = s * rows[1].transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();  // descending, length 12

  DltResult res;
  for (int i = 0; i < 12; ++i) {
    res.eigenvalues(i) = sv(11 - i) * sv(11 - i);
    res.eigenvectors.col(i) = svd.matrixV().col(11 - i);
  }
  const double top = res.eigenvalues(11);
  Require(top > 0.0, ErrorKind::kDegenerateGeometry, "weighted DLT system is zero");
  res.relative_gap = (res.eigenvalues(1) - res.eigenvalues(0)) / top;
  Require(res.relative_gap >= min_gap, ErrorKind::kDegenerateGeometry,
          "weighted DLT system is rank deficient");

  res.u = res.eigenvectors.col(0);
  double n2 = 0.0;
  for (int s : kRotationSlots) n2 += res.u(s) * res.u(s);
  Require(n2 > 0.0, ErrorKind::kDegenerateGeometry, "DLT rotation block vanished");
  res.p = std::sqrt(3.0 / n2) * res.u;
  for (int row = 0; row < 3; ++row) {
    res.R.row(row) = res.p.segment<3>(4 * row).transpose();
    res.t(row) = res.p(4 * row + 3);
  }
  return res;
}

std::vector<double> WeightedDltBackward(const DltResult& dlt,
                                        std::span<const Eigen::Vector3d> x3d,
                                        std::span<const Eigen::Vector2d> y2d,
                                        const Eigen::Matrix3d& dR,
                                        const Eigen::Vector3d& dt) {
  Vector12d dp;
  for (int row = 0; row < 3; ++row) {
    dp.segment<3>(4 * row) = dR.row(row).transpose();
    dp(4 * row + 3) = dt(row);
  }
  const Vector12d& u = dlt.u;
  double n2 = 0.0;
  for (int s : kRotationSlots) n2 += u(s) * u(s);
  const double n = std::sqrt(n2);
  const double proj = dp.dot(u);
  Vector12d du = std::sqrt(3.0) / n * dp;
  for (int s : kRotationSlots) du(s) -= std::sqrt(3.0) * u(s) * proj / (n2 * n);

  Vector12d v = Vector12d::Zero();
  for (int i = 1; i < 12; ++i) {
    const auto ui = dlt.eigenvectors.col(i);
    v += ui * (ui.dot(du) / (dlt.eigenvalues(0) - dlt.eigenvalues(i)));
  }
  std::vector<double> dw(x3d.size(), 0.0);
  for (std::size_t k = 0; k < x3d.size(); ++k) {
    for (const auto& a : DltRows(x3d[k], y2d[k])) dw[k] += a.dot(v) * a.dot(u);
  }
  return dw;
}

Pose DltToPose(const DltResult& dlt, std::span<const Eigen::Vector3d> x3d) {
  int front = 0;
  for (const auto& x : x3d) front += (dlt.R.row(2).dot(x) + dlt.t(2)) > 0.0 ? 1 : -1;
  const double sign = front < 0 ? -1.0 : 1.0;
  Pose pose;
  pose.R = NearestRotation(sign * dlt.R);
  pose.t = sign * dlt.t;
  return pose;
}

double PoseLoss(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                const Eigen::Matrix3d& R_gt, const Eigen::Vector3d& t_gt,
                Eigen::Matrix3d* dR, Eigen::Vector3d* dt) {
  const double rm = (R - R_gt).squaredNorm();
  const double rp = (R + R_gt).squaredNorm();
  const double tm = (t - t_gt).squaredNorm();
  const double tp = (t + t_gt).squaredNorm();
  if (dR != nullptr) *dR = 2.0 * (rm <= rp ? Eigen::Matrix3d(R - R_gt) : Eigen::Matrix3d(R + R_gt));
  if (dt != nullptr) *dt = 2.0 * (tm <= tp ? Eigen::Vector3d(t - t_gt) : Eigen::Vector3d(t + t_gt));
  return std::min(rm, rp) + std::min(tm, tp);
}

}  // namespace bpnp
