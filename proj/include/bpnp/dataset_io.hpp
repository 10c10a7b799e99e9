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
#include <filesystem>
#include <string>
#include <vector>

#include "bpnp/datagen.hpp"

namespace bpnp {

// On-disk dataset: PATH holds back-to-back little-endian records
//   u64 M, u64 N, u64 G,
//   f64[M*3] 3D points, f64[N*2] pixel points, f64[9] K (row-major),
//   f64[12] pose (R row-major then t), u32[G*2] (i3d, i2d) pairs
// and PATH.json is the manifest (record offsets, protocol config, seed).
struct DatasetManifest {
  std::string schema = "bpnp-dataset/1";
  ProtocolConfig config;
  double outlier_ratio = 0.0;
  std::string euler_order = "XYZ-intrinsic";
  std::string frame = "pixel";
  std::vector<std::uint64_t> offsets;
};

std::filesystem::path ManifestPath(const std::filesystem::path& data_path);

void WriteDataset(const std::filesystem::path& data_path,
                  const std::vector<SceneSample>& scenes,
                  DatasetManifest manifest);

struct Dataset {
  DatasetManifest manifest;
  std::vector<SceneSample> scenes;
};

// Accepts either the binary path or its manifest path.
Dataset ReadDataset(const std::filesystem::path& path);

// Serialized record bytes for one scene (exposed for format tests).
std::vector<std::uint8_t> EncodeRecord(const SceneSample& scene);
SceneSample DecodeRecord(const std::uint8_t* data, std::size_t size,
                         std::size_t* consumed);

// Generates `count` scenes via SynthesizeSample and injects
// floor(ratio * M) / floor(ratio * N) outliers with a per-sample stream.
std::vector<SceneSample> GenerateDataset(const ProtocolConfig& cfg,
                                         std::size_t count, double outlier_ratio);

}  // namespace bpnp
