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

#include <span>
#include <vector>

#include <Eigen/Core>

namespace bpnp {

// Pinhole intrinsics without skew.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Eigen::Matrix3d matrix() const;
  // Throws kInvalidInput unless fx > 0 and fy > 0.
  void Validate() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

// Maps reference-frame points into the camera frame: x_cam = R * x + t.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static Pose Identity() { return {}; }

  Eigen::Vector3d Transform(const Eigen::Vector3d& x) const { return R * x + t; }

  // R^T R = I and det R = +1 within tol.
  bool IsRotationValid(double tol = 1e-9) const;

  bool operator==(const Pose& o) const { return R == o.R && t == o.t; }
};

enum class Frame { kPixel, kNormalized };

struct PointSet3D {
  std::vector<Eigen::Vector3d> points;

  std::size_t size() const { return points.size(); }
  // M >= 1 and finite coordinates.
  void Validate() const;
};

struct PointSet2D {
  std::vector<Eigen::Vector2d> points;
  Frame frame = Frame::kPixel;

  std::size_t size() const { return points.size(); }
  void Validate() const;
};

inline constexpr double kDepthEpsilon = 1e-9;

// Pixel -> normalized coordinates (first two components of K^-1 * (y, 1)).
PointSet2D NormalizeImagePoints(const PointSet2D& pixels,
                                const CameraIntrinsics& K);
// Normalized -> pixel coordinates.
PointSet2D DenormalizeImagePoints(const PointSet2D& normalized,
                                  const CameraIntrinsics& K);

Eigen::Vector2d NormalizePoint(const Eigen::Vector2d& pixel,
                               const CameraIntrinsics& K);

// Perspective projection of K (R x + t). Throws kBehindCamera when the
// camera-frame depth is <= kDepthEpsilon.
Eigen::Vector2d Project(const Pose& pose, const CameraIntrinsics& K,
                        const Eigen::Vector3d& x);

// 1 - cos of the angle between R x + t and the ray (y_norm, 1); in [0, 2].
double AngularResidual(const Pose& pose, const Eigen::Vector3d& x,
                       const Eigen::Vector2d& y_norm);

// Angle in radians between R x + t and the ray (y_norm, 1). Accurate near
// zero, unlike acos(1 - AngularResidual).
double RayAngle(const Pose& pose, const Eigen::Vector3d& x,
                const Eigen::Vector2d& y_norm);

double RotationErrorDeg(const Eigen::Matrix3d& R, const Eigen::Matrix3d& R_gt);
double TranslationError(const Eigen::Vector3d& t, const Eigen::Vector3d& t_gt);

// fraction_i = |{e < thresholds_i}| / |errors|. Thresholds must be strictly
// increasing; errors must be non-empty.
std::vector<double> RecallCurve(std::span<const double> errors,
                                std::span<const double> thresholds);

Eigen::Matrix3d AxisAngle(const Eigen::Vector3d& axis, double angle_rad);
// Rodrigues map of a rotation vector.
Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega);
// Intrinsic X-Y-Z Euler angles: R = Rx(ax) * Ry(ay) * Rz(az).
Eigen::Matrix3d EulerXYZ(double ax_deg, double ay_deg, double az_deg);
// Nearest rotation in Frobenius norm (polar decomposition via SVD).
Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& M);

inline constexpr double kPi = 3.14159265358979323846;
inline double Deg2Rad(double d) { return d * kPi / 180.0; }
inline double Rad2Deg(double r) { return r * 180.0 / kPi; }

}  // namespace bpnp
