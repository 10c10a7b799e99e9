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

#include "bpnp/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "bpnp/error.hpp"

namespace bpnp {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kDegenerateGeometry: return "degenerate geometry";
    case ErrorKind::kBehindCamera: return "behind camera";
    case ErrorKind::kNumericFailure: return "numeric failure";
    case ErrorKind::kContractViolation: return "contract violation";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kNoSolution: return "no solution";
    case ErrorKind::kGenerationFailure: return "generation failure";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

void CameraIntrinsics::Validate() const {
  Require(fx > 0.0 && fy > 0.0 && std::isfinite(fx) && std::isfinite(fy) &&
              std::isfinite(cx) && std::isfinite(cy),
          ErrorKind::kInvalidInput, "intrinsics need finite fx, fy > 0");
}

bool Pose::IsRotationValid(double tol) const {
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

void PointSet3D::Validate() const {
  Require(!points.empty(), ErrorKind::kInvalidInput, "empty 3D point set");
  for (const auto& p : points) {
    Require(p.allFinite(), ErrorKind::kInvalidInput, "non-finite 3D point");
  }
}

void PointSet2D::Validate() const {
  Require(!points.empty(), ErrorKind::kInvalidInput, "empty 2D point set");
  for (const auto& p : points) {
    Require(p.allFinite(), ErrorKind::kInvalidInput, "non-finite 2D point");
  }
}

Eigen::Vector2d NormalizePoint(const Eigen::Vector2d& pixel,
                               const CameraIntrinsics& K) {
  return {(pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy};
}

PointSet2D NormalizeImagePoints(const PointSet2D& pixels,
                                const CameraIntrinsics& K) {
  Require(pixels.frame == Frame::kPixel, ErrorKind::kInvalidInput,
          "normalize expects pixel coordinates");
  K.Validate();
  PointSet2D out{{}, Frame::kNormalized};
  out.points.reserve(pixels.size());
  for (const auto& p : pixels.points) {
    Require(p.allFinite(), ErrorKind::kInvalidInput, "non-finite pixel");
    out.points.push_back(NormalizePoint(p, K));
  }
  return out;
}

PointSet2D DenormalizeImagePoints(const PointSet2D& normalized,
                                  const CameraIntrinsics& K) {
  Require(normalized.frame == Frame::kNormalized, ErrorKind::kInvalidInput,
          "denormalize expects normalized coordinates");
  K.Validate();
  PointSet2D out{{}, Frame::kPixel};
  out.points.reserve(normalized.size());
  for (const auto& p : normalized.points) {
    Require(p.allFinite(), ErrorKind::kInvalidInput, "non-finite point");
    out.points.emplace_back(K.fx * p.x() + K.cx, K.fy * p.y() + K.cy);
  }
  return out;
}

Eigen::Vector2d Project(const Pose& pose, const CameraIntrinsics& K,
                        const Eigen::Vector3d& x) {
  const Eigen::Vector3d c = pose.Transform(x);
  if (!(c.z() > kDepthEpsilon)) {
    Fail(ErrorKind::kBehindCamera, "point depth below epsilon");
  }
  return {K.fx * c.x() / c.z() + K.cx, K.fy * c.y() / c.z() + K.cy};
}

double AngularResidual(const Pose& pose, const Eigen::Vector3d& x,
                       const Eigen::Vector2d& y_norm) {
  const Eigen::Vector3d c = pose.Transform(x);
  const double n = c.norm();
  Require(n > 0.0, ErrorKind::kDegenerateGeometry,
          "transformed point at camera centre");
  const Eigen::Vector3d ray(y_norm.x(), y_norm.y(), 1.0);
  return 1.0 - c.dot(ray) / (n * ray.norm());
}

double RayAngle(const Pose& pose, const Eigen::Vector3d& x,
                const Eigen::Vector2d& y_norm) {
  const Eigen::Vector3d c = pose.Transform(x);
  const Eigen::Vector3d ray(y_norm.x(), y_norm.y(), 1.0);
  return std::atan2(c.cross(ray).norm(), c.dot(ray));
}

double RotationErrorDeg(const Eigen::Matrix3d& R, const Eigen::Matrix3d& R_gt) {
  // arccos((tr(R_gt^T R) - 1) / 2), evaluated through atan2 so that angles
  // near zero keep full precision.
  const Eigen::Matrix3d rel = R_gt.transpose() * R;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0),
                             rel(1, 0) - rel(0, 1));
  return Rad2Deg(std::atan2(0.5 * axis.norm(), c));
}

double TranslationError(const Eigen::Vector3d& t, const Eigen::Vector3d& t_gt) {
  return (t - t_gt).norm();
}

std::vector<double> RecallCurve(std::span<const double> errors,
                                std::span<const double> thresholds) {
  Require(!errors.empty(), ErrorKind::kInvalidInput, "recall of empty error list");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    Require(thresholds[i] > thresholds[i - 1], ErrorKind::kInvalidInput,
            "recall thresholds must be strictly increasing");
  }
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double tau : thresholds) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), tau) - sorted.begin();
    out.push_back(static_cast<double>(below) / static_cast<double>(sorted.size()));
  }
  return out;
}

Eigen::Matrix3d AxisAngle(const Eigen::Vector3d& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Eigen::Matrix3d W;
    W << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
    return Eigen::Matrix3d::Identity() + W;
  }
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Eigen::Matrix3d EulerXYZ(double ax_deg, double ay_deg, double az_deg) {
  return (Eigen::AngleAxisd(Deg2Rad(ax_deg), Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(Deg2Rad(ay_deg), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(Deg2Rad(az_deg), Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& M) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

}  // namespace bpnp
