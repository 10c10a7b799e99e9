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
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "bpnp/layers.hpp"
#include "bpnp/matrix.hpp"
#include "bpnp/params.hpp"

namespace bpnp {

// Row q lists the k nearest points to q (Euclidean), excluding q itself,
// ordered by distance with ties broken by lower index.
struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::uint32_t> neighbors;  // P * k, row-major

  std::size_t num_points() const { return k == 0 ? 0 : neighbors.size() / k; }
  const std::uint32_t* row(std::size_t q) const { return neighbors.data() + q * k; }
};

KnnGraph BuildKnnGraph(const Matrix& points, std::size_t k);

// Edge convolution with linear theta/phi:
//   out_q = avg_{n in N(q)} [theta (o_n - o_q) + phi o_q] + b
// Because both maps are linear the average is taken over the neighbour
// features first.
struct EdgeConv {
  std::size_t theta = 0;
  std::size_t phi = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  static EdgeConv Create(ParamStore& store, const std::string& name,
                         std::size_t in, std::size_t out, std::mt19937_64& rng);

  struct Cache {
    Matrix diff;  // mean neighbour feature minus anchor
  };
  Matrix Forward(const ParamStore& store, const Matrix& x, const KnnGraph& graph,
                 Cache* cache) const;
  Matrix Backward(ParamStore& store, const Matrix& x, const KnnGraph& graph,
                  const Cache& cache, const Matrix& dy) const;
};

struct FeatureNetConfig {
  std::size_t width = 128;
  std::size_t blocks = 4;
  std::size_t knn = 10;
  std::size_t transform_hidden = 32;
  bool transform_3d = true;
  double transform_init_noise = 1e-3;
  std::uint64_t seed = 1;

  nlohmann::json ToJson() const;
  static FeatureNetConfig FromJson(const nlohmann::json& j);
};

enum class Stream { k2D, k3D };

// Two independent streams. Each stream: (3D only) learned 3x3 input
// transform, per-point lift to `width` channels, `blocks` residual blocks of
//   o += MLP(ReLU(Affine(ContextNorm(EdgeConv(o)))))
// and a final row-wise L2 normalisation. The KNN graph is built once per
// forward pass on the raw input coordinates.
class FeatureNet {
 public:
  explicit FeatureNet(const FeatureNetConfig& cfg);

  struct Cache {
    bool valid = false;
    KnnGraph graph;
    Matrix input;
    // input transform
    Matrix t_hidden_pre;
    std::vector<double> t_pool;
    Matrix transform;  // 3x3
    Matrix aligned;
    // blocks
    Matrix lifted;
    std::vector<Matrix> block_in;
    std::vector<EdgeConv::Cache> edge;
    std::vector<Matrix> edge_out;
    std::vector<ContextNormCache> cn;
    std::vector<Matrix> affine_out;
    std::vector<Matrix> relu_out;
    Matrix pre_norm;
    std::vector<double> norms;
    Matrix features;
  };

  // Throws NumericError carrying the layer index on non-finite activations.
  Matrix Forward(Stream stream, const Matrix& points, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into params().grad and returns d/dpoints.
  // Throws kContractViolation when `cache` was not filled by Forward.
  Matrix Backward(Stream stream, const Cache& cache, const Matrix& dfeatures);

  const FeatureNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  struct StreamLayers {
    bool has_transform = false;
    Linear t_hidden;
    Linear t_out;  // hidden -> 9
    Linear lift;
    std::vector<EdgeConv> edge;
    std::vector<ChannelAffine> affine;
    std::vector<Linear> mlp;
  };

  void BuildStream(StreamLayers& s, const std::string& prefix, std::size_t in_dim,
                   bool transform, std::mt19937_64& rng);
  const StreamLayers& layers(Stream s) const { return s == Stream::k3D ? s3d_ : s2d_; }

  FeatureNetConfig cfg_;
  ParamStore params_;
  StreamLayers s2d_;
  StreamLayers s3d_;
};

Matrix ToMatrix(const std::vector<Eigen::Vector3d>& pts);
Matrix ToMatrix(const std::vector<Eigen::Vector2d>& pts);

}  // namespace bpnp
