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
#include <random>
#include <string>
#include <vector>

#include "bpnp/geometry.hpp"

namespace bpnp {

using Rng = std::mt19937_64;

enum class Protocol { kModelNet, kNyuLike };
enum class ShapeKind { kMixed, kCube, kSphere, kClusters };

const char* ProtocolName(Protocol p);
Protocol ParseProtocol(const std::string& name);
const char* ShapeName(ShapeKind s);
ShapeKind ParseShape(const std::string& name);

struct ProtocolConfig {
  Protocol protocol = Protocol::kModelNet;
  std::size_t num_points = 1000;
  double euler_range_deg = 45.0;
  double trans_range = 0.5;
  double z_offset = 4.5;
  int image_width = 640;
  int image_height = 480;
  double focal = 800.0;
  double noise_sigma = 2.0;
  std::uint64_t seed = 0;
  ShapeKind shape = ShapeKind::kMixed;
  bool visibility_filter = true;
  // nyu-like scenes sample camera-frame depth uniformly in this range.
  double min_depth = 1.0;
  double max_depth = 5.0;
  int max_attempts = 64;

  static ProtocolConfig ModelNet();
  static ProtocolConfig NyuLike();

  CameraIntrinsics intrinsics() const;
  void Validate() const;
};

struct IndexPair {
  std::uint32_t i3d = 0;
  std::uint32_t i2d = 0;
  bool operator==(const IndexPair&) const = default;
  auto operator<=>(const IndexPair&) const = default;
};

struct SceneSample {
  PointSet3D x3d;
  PointSet2D y2d;  // pixel frame
  Pose pose_gt;
  CameraIntrinsics K;
  std::vector<IndexPair> gt_matches;
  std::vector<bool> outlier3d;
  std::vector<bool> outlier2d;

  std::size_t M() const { return x3d.size(); }
  std::size_t N() const { return y2d.size(); }
  // gt_matches index rows in range and are one-to-one.
  void Validate() const;
  PointSet2D normalized2d() const { return NormalizeImagePoints(y2d, K); }
};

// R from three Euler angles uniform in [0, euler_range]; t uniform in
// [-trans_range, trans_range]^3 plus (0, 0, z_offset).
Pose SamplePose(const ProtocolConfig& cfg, Rng& rng);

SceneSample SynthesizeScene(const ProtocolConfig& cfg, Rng& rng);

// Sample `index` of a dataset: its own stream seeded with cfg.seed + index,
// so serial and parallel generation agree.
SceneSample SynthesizeSample(const ProtocolConfig& cfg, std::uint64_t index);

// Appends floor(nu3d * M) 3D and floor(nu2d * N) 2D points drawn uniformly in
// the axis-aligned bounding boxes of the existing sets.
SceneSample InjectOutliers(const SceneSample& scene, double nu3d, double nu2d,
                           Rng& rng);

// Weak supervision: (i, j) kept when j is the 2D point nearest to the
// projection of x_i and closer than tau_px; one-to-one enforced greedily in
// order of ascending distance. Points behind the camera are skipped.
std::vector<IndexPair> LabelCorrespondences(const PointSet3D& x3d,
                                            const PointSet2D& y2d,
                                            const Pose& pose_gt,
                                            const CameraIntrinsics& K,
                                            double tau_px);

// Random relabeling of both point sets with gt indices remapped.
SceneSample ShuffleScene(const SceneSample& scene, Rng& rng);

}  // namespace bpnp
