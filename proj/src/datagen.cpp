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

#include "bpnp/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bpnp/error.hpp"

namespace bpnp {

const char* ProtocolName(Protocol p) {
  return p == Protocol::kModelNet ? "modelnet" : "nyu-like";
}

Protocol ParseProtocol(const std::string& name) {
  if (name == "modelnet") return Protocol::kModelNet;
  if (name == "nyu-like") return Protocol::kNyuLike;
  Fail(ErrorKind::kConfiguration, "unknown protocol '" + name + "'");
}

const char* ShapeName(ShapeKind s) {
  switch (s) {
    case ShapeKind::kMixed: return "mixed";
    case ShapeKind::kCube: return "cube";
    case ShapeKind::kSphere: return "sphere";
    case ShapeKind::kClusters: return "clusters";
  }
  return "mixed";
}

ShapeKind ParseShape(const std::string& name) {
  if (name == "mixed") return ShapeKind::kMixed;
  if (name == "cube") return ShapeKind::kCube;
  if (name == "sphere") return ShapeKind::kSphere;
  if (name == "clusters") return ShapeKind::kClusters;
  Fail(ErrorKind::kConfiguration, "unknown shape '" + name + "'");
}

ProtocolConfig ProtocolConfig::ModelNet() { return {}; }

ProtocolConfig ProtocolConfig::NyuLike() {
  ProtocolConfig cfg;
  cfg.protocol = Protocol::kNyuLike;
  cfg.z_offset = 0.0;
  return cfg;
}

CameraIntrinsics ProtocolConfig::intrinsics() const {
  return {focal, focal, image_width / 2.0, image_height / 2.0};
}

void ProtocolConfig::Validate() const {
  Require(num_points >= 4, ErrorKind::kConfiguration, "need at least 4 points");
  Require(noise_sigma >= 0.0, ErrorKind::kConfiguration, "noise_sigma must be >= 0");
  Require(focal > 0.0, ErrorKind::kConfiguration, "focal must be > 0");
  Require(image_width > 0 && image_height > 0, ErrorKind::kConfiguration,
          "image size must be positive");
  Require(euler_range_deg >= 0.0 && trans_range >= 0.0, ErrorKind::kConfiguration,
          "ranges must be non-negative");
  Require(min_depth > 0.0 && max_depth >= min_depth, ErrorKind::kConfiguration,
          "invalid depth range");
  Require(max_attempts >= 1, ErrorKind::kConfiguration, "max_attempts must be >= 1");
}

void SceneSample::Validate() const {
  std::vector<bool> used3(M(), false), used2(N(), false);
  for (const auto& m : gt_matches) {
    Require(m.i3d < M() && m.i2d < N(), ErrorKind::kInvalidInput,
            "gt match index out of range");
    Require(!used3[m.i3d] && !used2[m.i2d], ErrorKind::kInvalidInput,
            "gt matches must be one-to-one");
    used3[m.i3d] = used2[m.i2d] = true;
  }
}

Pose SamplePose(const ProtocolConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, cfg.euler_range_deg);
  std::uniform_real_distribution<double> trans(-cfg.trans_range, cfg.trans_range);
  Pose pose;
  const double ax = angle(rng), ay = angle(rng), az = angle(rng);
  pose.R = EulerXYZ(ax, ay, az);
  const double tx = trans(rng), ty = trans(rng), tz = trans(rng);
  pose.t = Eigen::Vector3d(tx, ty, tz + cfg.z_offset);
  return pose;
}

namespace {

// Object-centred shapes inside the unit ball.
std::vector<Eigen::Vector3d> SampleShape(ShapeKind kind, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(n);
  switch (kind) {
    case ShapeKind::kCube: {
      const double half = 1.0 / std::sqrt(3.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = unit(rng), y = unit(rng), z = unit(rng);
        pts.emplace_back(half * x, half * y, half * z);
      }
      break;
    }
    case ShapeKind::kSphere: {
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector3d g;
        do {
          const double x = gauss(rng), y = gauss(rng), z = gauss(rng);
          g = Eigen::Vector3d(x, y, z);
        } while (g.norm() < 1e-12);
        pts.push_back(g.normalized());
      }
      break;
    }
    case ShapeKind::kClusters:
    case ShapeKind::kMixed: {
      std::uniform_int_distribution<int> count(3, 6);
      const int k = count(rng);
      std::vector<Eigen::Vector3d> centres;
      std::vector<double> spread;
      for (int c = 0; c < k; ++c) {
        const double x = unit(rng), y = unit(rng), z = unit(rng);
        centres.emplace_back(0.6 * x, 0.6 * y, 0.6 * z);
        spread.push_back(0.08 + 0.12 * (unit(rng) + 1.0) / 2.0);
      }
      std::uniform_int_distribution<int> pick(0, k - 1);
      for (std::size_t i = 0; i < n; ++i) {
        const int c = pick(rng);
        Eigen::Vector3d p;
        do {
          const double x = gauss(rng), y = gauss(rng), z = gauss(rng);
          p = centres[c] + spread[c] * Eigen::Vector3d(x, y, z);
        } while (p.norm() > 1.0);
        pts.push_back(p);
      }
      break;
    }
  }
  return pts;
}

bool InImage(const Eigen::Vector2d& p, const ProtocolConfig& cfg) {
  return p.x() >= 0.0 && p.x() <= cfg.image_width && p.y() >= 0.0 &&
         p.y() <= cfg.image_height;
}

SceneSample SynthesizeModelNet(const ProtocolConfig& cfg, Rng& rng) {
  const CameraIntrinsics K = cfg.intrinsics();
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    ShapeKind shape = cfg.shape;
    if (shape == ShapeKind::kMixed) {
      std::uniform_int_distribution<int> pick(0, 2);
      const int s = pick(rng);
      shape = s == 0 ? ShapeKind::kCube : s == 1 ? ShapeKind::kSphere : ShapeKind::kClusters;
    }
    SceneSample scene;
    scene.K = K;
    scene.x3d.points = SampleShape(shape, cfg.num_points, rng);
    scene.pose_gt = SamplePose(cfg, rng);
    scene.y2d.frame = Frame::kPixel;
    for (std::size_t i = 0; i < scene.x3d.size(); ++i) {
      const Eigen::Vector3d c = scene.pose_gt.Transform(scene.x3d.points[i]);
      if (!(c.z() > kDepthEpsilon)) continue;
      const Eigen::Vector2d p = Project(scene.pose_gt, K, scene.x3d.points[i]);
      if (cfg.visibility_filter && !InImage(p, cfg)) continue;
      scene.gt_matches.push_back({static_cast<std::uint32_t>(i),
                                  static_cast<std::uint32_t>(scene.y2d.size())});
      scene.y2d.points.push_back(p);
    }
    // Noise draws happen after visibility so the filter sees clean projections.
    for (auto& p : scene.y2d.points) {
      const double nx = noise(rng), ny = noise(rng);
      p += cfg.noise_sigma * Eigen::Vector2d(nx, ny);
    }
    if (scene.y2d.size() < 4) continue;
    scene.outlier3d.assign(scene.M(), false);
    scene.outlier2d.assign(scene.N(), false);
    return scene;
  }
  Fail(ErrorKind::kGenerationFailure, "fewer than 4 visible points after retries");
}

SceneSample SynthesizeNyuLike(const ProtocolConfig& cfg, Rng& rng) {
  const CameraIntrinsics K = cfg.intrinsics();
  std::uniform_real_distribution<double> u(0.0, cfg.image_width);
  std::uniform_real_distribution<double> v(0.0, cfg.image_height);
  std::uniform_real_distribution<double> depth(cfg.min_depth, cfg.max_depth);
  std::normal_distribution<double> noise(0.0, 1.0);
  SceneSample scene;
  scene.K = K;
  scene.pose_gt = SamplePose(cfg, rng);
  scene.y2d.frame = Frame::kPixel;
  const Eigen::Matrix3d Rt = scene.pose_gt.R.transpose();
  for (std::size_t i = 0; i < cfg.num_points; ++i) {
    const double px = u(rng), py = v(rng), z = depth(rng);
    const Eigen::Vector2d n = NormalizePoint({px, py}, K);
    const Eigen::Vector3d cam(n.x() * z, n.y() * z, z);
    scene.x3d.points.push_back(Rt * (cam - scene.pose_gt.t));
    // Re-project through the stored pose so the clean pair is exact in double.
    scene.y2d.points.push_back(Project(scene.pose_gt, K, scene.x3d.points.back()));
    scene.gt_matches.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i)});
  }
  for (auto& p : scene.y2d.points) {
    const double nx = noise(rng), ny = noise(rng);
    p += cfg.noise_sigma * Eigen::Vector2d(nx, ny);
  }
  scene.outlier3d.assign(scene.M(), false);
  scene.outlier2d.assign(scene.N(), false);
  return scene;
}

}  // namespace

SceneSample SynthesizeScene(const ProtocolConfig& cfg, Rng& rng) {
  cfg.Validate();
  return cfg.protocol == Protocol::kModelNet ? SynthesizeModelNet(cfg, rng)
                                             : SynthesizeNyuLike(cfg, rng);
}

SceneSample SynthesizeSample(const ProtocolConfig& cfg, std::uint64_t index) {
  Rng rng(cfg.seed + index);
  return SynthesizeScene(cfg, rng);
}

SceneSample InjectOutliers(const SceneSample& scene, double nu3d, double nu2d,
                           Rng& rng) {
  Require(nu3d >= 0.0 && nu3d <= 1.0 && nu2d >= 0.0 && nu2d <= 1.0,
          ErrorKind::kInvalidInput, "outlier ratios must lie in [0, 1]");
  SceneSample out = scene;
  if (out.outlier3d.size() != out.M()) out.outlier3d.assign(out.M(), false);
  if (out.outlier2d.size() != out.N()) out.outlier2d.assign(out.N(), false);
  const auto n3 = static_cast<std::size_t>(std::floor(nu3d * static_cast<double>(scene.M())));
  const auto n2 = static_cast<std::size_t>(std::floor(nu2d * static_cast<double>(scene.N())));
  if (n3 > 0) {
    Eigen::Vector3d lo = scene.x3d.points[0], hi = lo;
    for (const auto& p : scene.x3d.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    Require(((hi - lo).array() > 0.0).all(), ErrorKind::kInvalidInput,
            "degenerate 3D bounding box");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < n3; ++k) {
      const double a = unit(rng), b = unit(rng), c = unit(rng);
      out.x3d.points.push_back(lo + Eigen::Vector3d(a, b, c).cwiseProduct(hi - lo));
      out.outlier3d.push_back(true);
    }
  }
  if (n2 > 0) {
    Eigen::Vector2d lo = scene.y2d.points[0], hi = lo;
    for (const auto& p : scene.y2d.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    Require(((hi - lo).array() > 0.0).all(), ErrorKind::kInvalidInput,
            "degenerate 2D bounding box");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < n2; ++k) {
      const double a = unit(rng), b = unit(rng);
      out.y2d.points.push_back(lo + Eigen::Vector2d(a, b).cwiseProduct(hi - lo));
      out.outlier2d.push_back(true);
    }
  }
  return out;
}

std::vector<IndexPair> LabelCorrespondences(const PointSet3D& x3d,
                                            const PointSet2D& y2d,
                                            const Pose& pose_gt,
                                            const CameraIntrinsics& K,
                                            double tau_px) {
  Require(tau_px > 0.0, ErrorKind::kInvalidInput, "tau_px must be > 0");
  Require(y2d.frame == Frame::kPixel, ErrorKind::kInvalidInput,
          "labeling expects pixel coordinates");
  struct Candidate {
    double dist;
    std::uint32_t i, j;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < x3d.size(); ++i) {
    const Eigen::Vector3d c = pose_gt.Transform(x3d.points[i]);
    if (!(c.z() > kDepthEpsilon)) continue;
    const Eigen::Vector2d p = Project(pose_gt, K, x3d.points[i]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < y2d.size(); ++j) {
      const double d = (y2d.points[j] - p).norm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best < tau_px) {
      candidates.push_back({best, static_cast<std::uint32_t>(i),
                            static_cast<std::uint32_t>(best_j)});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });
  std::vector<bool> used2(y2d.size(), false);
  std::vector<IndexPair> out;
  for (const auto& c : candidates) {
    if (used2[c.j]) continue;
    used2[c.j] = true;
    out.push_back({c.i, c.j});
  }
  std::sort(out.begin(), out.end());
  return out;
}

SceneSample ShuffleScene(const SceneSample& scene, Rng& rng) {
  std::vector<std::size_t> p3(scene.M()), p2(scene.N());
  std::iota(p3.begin(), p3.end(), 0);
  std::iota(p2.begin(), p2.end(), 0);
  std::shuffle(p3.begin(), p3.end(), rng);
  std::shuffle(p2.begin(), p2.end(), rng);
  // new index k holds old point p[k]
  std::vector<std::uint32_t> inv3(scene.M()), inv2(scene.N());
  SceneSample out = scene;
  for (std::size_t k = 0; k < p3.size(); ++k) {
    out.x3d.points[k] = scene.x3d.points[p3[k]];
    if (!scene.outlier3d.empty()) out.outlier3d[k] = scene.outlier3d[p3[k]];
    inv3[p3[k]] = static_cast<std::uint32_t>(k);
  }
  for (std::size_t k = 0; k < p2.size(); ++k) {
    out.y2d.points[k] = scene.y2d.points[p2[k]];
    if (!scene.outlier2d.empty()) out.outlier2d[k] = scene.outlier2d[p2[k]];
    inv2[p2[k]] = static_cast<std::uint32_t>(k);
  }
  for (auto& m : out.gt_matches) m = {inv3[m.i3d], inv2[m.i2d]};
  std::sort(out.gt_matches.begin(), out.gt_matches.end());
  return out;
}

}  // namespace bpnp
