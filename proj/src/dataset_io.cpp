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

#include "bpnp/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bpnp/error.hpp"

namespace bpnp {
namespace {

static_assert(std::endian::native == std::endian::little,
              "dataset encoding assumes a little-endian host");

template <typename T>
void Put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T Get(const std::uint8_t* data, std::size_t size, std::size_t& pos) {
  Require(pos + sizeof(T) <= size, ErrorKind::kIo, "truncated dataset record");
  T v;
  std::memcpy(&v, data + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

nlohmann::json ConfigToJson(const ProtocolConfig& c) {
  return {{"protocol", ProtocolName(c.protocol)},
          {"num_points", c.num_points},
          {"euler_range_deg", c.euler_range_deg},
          {"trans_range", c.trans_range},
          {"z_offset", c.z_offset},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"focal", c.focal},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"shape", ShapeName(c.shape)},
          {"visibility_filter", c.visibility_filter},
          {"min_depth", c.min_depth},
          {"max_depth", c.max_depth}};
}

ProtocolConfig ConfigFromJson(const nlohmann::json& j) {
  ProtocolConfig c;
  c.protocol = ParseProtocol(j.at("protocol").get<std::string>());
  c.num_points = j.at("num_points").get<std::size_t>();
  c.euler_range_deg = j.at("euler_range_deg").get<double>();
  c.trans_range = j.at("trans_range").get<double>();
  c.z_offset = j.at("z_offset").get<double>();
  c.image_width = j.at("image_width").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.focal = j.at("focal").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.shape = ParseShape(j.at("shape").get<std::string>());
  c.visibility_filter = j.at("visibility_filter").get<bool>();
  c.min_depth = j.at("min_depth").get<double>();
  c.max_depth = j.at("max_depth").get<double>();
  return c;
}

}  // namespace

std::filesystem::path ManifestPath(const std::filesystem::path& data_path) {
  return std::filesystem::path(data_path.string() + ".json");
}

std::vector<std::uint8_t> EncodeRecord(const SceneSample& s) {
  std::vector<std::uint8_t> out;
  Put<std::uint64_t>(out, s.M());
  Put<std::uint64_t>(out, s.N());
  Put<std::uint64_t>(out, s.gt_matches.size());
  for (const auto& p : s.x3d.points) {
    for (int k = 0; k < 3; ++k) Put<double>(out, p[k]);
  }
  for (const auto& p : s.y2d.points) {
    for (int k = 0; k < 2; ++k) Put<double>(out, p[k]);
  }
  const Eigen::Matrix3d K = s.K.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) Put<double>(out, K(r, c));
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) Put<double>(out, s.pose_gt.R(r, c));
  }
  for (int k = 0; k < 3; ++k) Put<double>(out, s.pose_gt.t[k]);
  for (const auto& m : s.gt_matches) {
    Put<std::uint32_t>(out, m.i3d);
    Put<std::uint32_t>(out, m.i2d);
  }
  return out;
}

SceneSample DecodeRecord(const std::uint8_t* data, std::size_t size,
                         std::size_t* consumed) {
  std::size_t pos = 0;
  const auto M = Get<std::uint64_t>(data, size, pos);
  const auto N = Get<std::uint64_t>(data, size, pos);
  const auto G = Get<std::uint64_t>(data, size, pos);
  Require(M < (1ULL << 32) && N < (1ULL << 32) && G <= std::min(M, N),
          ErrorKind::kIo, "implausible record counts");
  SceneSample s;
  s.x3d.points.resize(M);
  for (auto& p : s.x3d.points) {
    for (int k = 0; k < 3; ++k) p[k] = Get<double>(data, size, pos);
  }
  s.y2d.frame = Frame::kPixel;
  s.y2d.points.resize(N);
  for (auto& p : s.y2d.points) {
    for (int k = 0; k < 2; ++k) p[k] = Get<double>(data, size, pos);
  }
  double K[9];
  for (double& v : K) v = Get<double>(data, size, pos);
  s.K = {K[0], K[4], K[2], K[5]};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) s.pose_gt.R(r, c) = Get<double>(data, size, pos);
  }
  for (int k = 0; k < 3; ++k) s.pose_gt.t[k] = Get<double>(data, size, pos);
  s.gt_matches.resize(G);
  for (auto& m : s.gt_matches) {
    m.i3d = Get<std::uint32_t>(data, size, pos);
    m.i2d = Get<std::uint32_t>(data, size, pos);
  }
  s.outlier3d.assign(M, false);
  s.outlier2d.assign(N, false);
  s.Validate();
  if (consumed != nullptr) *consumed = pos;
  return s;
}

void WriteDataset(const std::filesystem::path& data_path,
                  const std::vector<SceneSample>& scenes,
                  DatasetManifest manifest) {
  std::ofstream bin(data_path, std::ios::binary | std::ios::trunc);
  Require(bin.good(), ErrorKind::kIo, "cannot open " + data_path.string());
  manifest.offsets.clear();
  std::uint64_t offset = 0;
  for (const auto& s : scenes) {
    const auto rec = EncodeRecord(s);
    manifest.offsets.push_back(offset);
    bin.write(reinterpret_cast<const char*>(rec.data()),
              static_cast<std::streamsize>(rec.size()));
    offset += rec.size();
  }
  Require(bin.good(), ErrorKind::kIo, "write failed for " + data_path.string());

  nlohmann::json j = {{"schema", manifest.schema},
                      {"data_file", data_path.filename().string()},
                      {"protocol", ProtocolName(manifest.config.protocol)},
                      {"seed", manifest.config.seed},
                      {"outlier_ratio", manifest.outlier_ratio},
                      {"euler_order", manifest.euler_order},
                      {"frame", manifest.frame},
                      {"count", scenes.size()},
                      {"config", ConfigToJson(manifest.config)},
                      {"record_offsets", manifest.offsets}};
  std::ofstream js(ManifestPath(data_path), std::ios::trunc);
  Require(js.good(), ErrorKind::kIo, "cannot write manifest");
  js << j.dump(2) << '\n';
}

Dataset ReadDataset(const std::filesystem::path& path) {
  std::filesystem::path data_path = path;
  if (path.extension() == ".json") data_path.replace_extension("");
  std::ifstream js(ManifestPath(data_path));
  Require(js.good(), ErrorKind::kConfiguration,
          "missing dataset manifest for " + data_path.string());
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("bad manifest: ") + e.what());
  }
  Dataset ds;
  try {
    ds.manifest.schema = j.at("schema").get<std::string>();
    ds.manifest.config = ConfigFromJson(j.at("config"));
    ds.manifest.outlier_ratio = j.at("outlier_ratio").get<double>();
    ds.manifest.euler_order = j.at("euler_order").get<std::string>();
    ds.manifest.frame = j.at("frame").get<std::string>();
    ds.manifest.offsets = j.at("record_offsets").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("bad manifest: ") + e.what());
  }
  Require(ds.manifest.schema == "bpnp-dataset/1", ErrorKind::kConfiguration,
          "unsupported dataset schema " + ds.manifest.schema);

  std::ifstream bin(data_path, std::ios::binary);
  Require(bin.good(), ErrorKind::kConfiguration,
          "missing dataset file " + data_path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(bin)),
                                  std::istreambuf_iterator<char>());
  for (std::uint64_t off : ds.manifest.offsets) {
    Require(off <= bytes.size(), ErrorKind::kIo, "record offset past end of file");
    ds.scenes.push_back(DecodeRecord(bytes.data() + off, bytes.size() - off, nullptr));
  }
  return ds;
}

std::vector<SceneSample> GenerateDataset(const ProtocolConfig& cfg,
                                         std::size_t count, double outlier_ratio) {
  std::vector<SceneSample> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSample s = SynthesizeSample(cfg, i);
    if (outlier_ratio > 0.0) {
      // Separate stream so outlier-free and outlier-injected datasets share scenes.
      Rng rng((cfg.seed + i) ^ 0x9E3779B97F4A7C15ULL);
      s = InjectOutliers(s, outlier_ratio, outlier_ratio, rng);
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace bpnp
