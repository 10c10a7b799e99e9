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

#include "bpnp/featnet.hpp"

#include "bpnp/error.hpp"

namespace bpnp {

nlohmann::json FeatureNetConfig::ToJson() const {
  return {{"width", width},
          {"blocks", blocks},
          {"knn", knn},
          {"transform_hidden", transform_hidden},
          {"transform_3d", transform_3d},
          {"transform_init_noise", transform_init_noise},
          {"seed", seed}};
}

FeatureNetConfig FeatureNetConfig::FromJson(const nlohmann::json& j) {
  FeatureNetConfig c;
  c.width = j.value("width", c.width);
  c.blocks = j.value("blocks", c.blocks);
  c.knn = j.value("knn", c.knn);
  c.transform_hidden = j.value("transform_hidden", c.transform_hidden);
  c.transform_3d = j.value("transform_3d", c.transform_3d);
  c.transform_init_noise = j.value("transform_init_noise", c.transform_init_noise);
  c.seed = j.value("seed", c.seed);
  Require(c.width >= 1 && c.knn >= 1 && c.transform_hidden >= 1,
          ErrorKind::kConfiguration, "feature net sizes must be positive");
  return c;
}

FeatureNet::FeatureNet(const FeatureNetConfig& cfg) : cfg_(cfg) {
  std::mt19937_64 rng(cfg.seed);
  BuildStream(s3d_, "featnet3d", 3, cfg.transform_3d, rng);
  BuildStream(s2d_, "featnet2d", 2, false, rng);
}

void FeatureNet::BuildStream(StreamLayers& s, const std::string& prefix,
                             std::size_t in_dim, bool transform,
                             std::mt19937_64& rng) {
  s.has_transform = transform;
  if (transform) {
    s.t_hidden = Linear::Create(params_, prefix + "/transform/hidden", in_dim,
                                cfg_.transform_hidden, rng);
    // Output scaled so the initial transform is identity plus ~noise.
    s.t_out = Linear::Create(
        params_, prefix + "/transform/out", cfg_.transform_hidden, 9, rng,
        cfg_.transform_init_noise * std::sqrt(static_cast<double>(cfg_.transform_hidden)));
  }
  s.lift = Linear::Create(params_, prefix + "/lift", in_dim, cfg_.width, rng);
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    const std::string name = prefix + "/block" + std::to_string(b);
    s.edge.push_back(EdgeConv::Create(params_, name + "/edge", cfg_.width, cfg_.width, rng));
    s.affine.push_back(ChannelAffine::Create(params_, name + "/affine", cfg_.width));
    s.mlp.push_back(Linear::Create(params_, name + "/mlp", cfg_.width, cfg_.width, rng));
  }
}

Matrix FeatureNet::Forward(Stream stream, const Matrix& points, Cache* cache) const {
  const StreamLayers& s = layers(stream);
  const std::size_t dim = stream == Stream::k3D ? 3 : 2;
  Require(points.cols() == dim, ErrorKind::kInvalidInput, "point dimension mismatch");
  if (!AllFinite(points)) throw NumericError(0, "non-finite input points");
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c = Cache{};
  c.graph = BuildKnnGraph(points, cfg_.knn);
  c.input = points;
  int layer = 0;

  if (s.has_transform) {
    c.t_hidden_pre = s.t_hidden.Forward(params_, points);
    const Matrix hidden = Relu(c.t_hidden_pre);
    Matrix pool(1, hidden.cols());
    for (std::size_t p = 0; p < hidden.rows(); ++p) {
      for (std::size_t k = 0; k < hidden.cols(); ++k) pool(0, k) += hidden(p, k);
    }
    for (double& v : pool.values()) v /= static_cast<double>(hidden.rows());
    c.t_pool = pool.values();
    const Matrix tvec = s.t_out.Forward(params_, pool);
    c.transform = Matrix(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) c.transform(r, k) = (r == k ? 1.0 : 0.0) + tvec(0, 3 * r + k);
    }
    c.aligned = Matrix(points.rows(), 3);
    for (std::size_t p = 0; p < points.rows(); ++p) {
      for (int r = 0; r < 3; ++r) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += c.transform(r, k) * points(p, k);
        c.aligned(p, r) = acc;
      }
    }
    CheckLayer(c.aligned, layer);
  } else {
    c.aligned = points;
  }
  ++layer;

  Matrix o = s.lift.Forward(params_, c.aligned);
  CheckLayer(o, layer++);
  c.lifted = o;
  for (std::size_t b = 0; b < s.edge.size(); ++b) {
    c.block_in.push_back(o);
    EdgeConv::Cache ec;
    Matrix e = s.edge[b].Forward(params_, o, c.graph, &ec);
    CheckLayer(e, layer++);
    ContextNormCache cn;
    Matrix n = ContextNormalize(e, &cn);
    CheckLayer(n, layer++);
    Matrix a = s.affine[b].Forward(params_, n);
    Matrix r = Relu(a);
    Matrix m = s.mlp[b].Forward(params_, r);
    CheckLayer(m, layer++);
    AddInPlace(o, m);
    c.edge.push_back(std::move(ec));
    c.edge_out.push_back(std::move(e));
    c.cn.push_back(std::move(cn));
    c.affine_out.push_back(std::move(a));
    c.relu_out.push_back(std::move(r));
  }
  c.pre_norm = o;
  Matrix f = L2NormalizeRows(o, &c.norms);
  CheckLayer(f, layer);
  c.features = f;
  c.valid = true;
  return f;
}

Matrix FeatureNet::Backward(Stream stream, const Cache& c, const Matrix& dfeatures) {
  Require(c.valid, ErrorKind::kContractViolation, "backward without a forward cache");
  Require(dfeatures.rows() == c.features.rows() && dfeatures.cols() == c.features.cols(),
          ErrorKind::kContractViolation, "feature gradient shape mismatch");
  const StreamLayers& s = layers(stream);
  Matrix d = L2NormalizeRowsBackward(c.features, c.norms, dfeatures);
  for (std::size_t bi = s.edge.size(); bi-- > 0;) {
    const Matrix dr = s.mlp[bi].Backward(params_, c.relu_out[bi], d);
    const Matrix da = ReluBackward(c.affine_out[bi], dr);
    const Matrix dn = s.affine[bi].Backward(params_, c.cn[bi].y, da);
    const Matrix de = ContextNormalizeBackward(c.cn[bi], dn);
    const Matrix din = s.edge[bi].Backward(params_, c.block_in[bi], c.graph, c.edge[bi], de);
    AddInPlace(d, din);
  }
  Matrix daligned = s.lift.Backward(params_, c.aligned, d);
  if (!s.has_transform) return daligned;

  const Matrix& X = c.input;
  const std::size_t P = X.rows();
  Matrix dX(P, 3);
  Matrix dtvec(1, 9);
  for (std::size_t p = 0; p < P; ++p) {
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) {
        dtvec(0, 3 * r + k) += daligned(p, r) * X(p, k);
        dX(p, k) += c.transform(r, k) * daligned(p, r);
      }
    }
  }
  Matrix pool(1, c.t_pool.size());
  pool.values() = c.t_pool;
  const Matrix dpool = s.t_out.Backward(params_, pool, dtvec);
  Matrix dhidden(P, dpool.cols());
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t k = 0; k < dpool.cols(); ++k) {
      dhidden(p, k) = dpool(0, k) / static_cast<double>(P);
    }
  }
  const Matrix dpre = ReluBackward(c.t_hidden_pre, dhidden);
  AddInPlace(dX, s.t_hidden.Backward(params_, X, dpre));
  return dX;
}

}  // namespace bpnp
