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

#include "bpnp/layers.hpp"

#include <cmath>

#include "bpnp/error.hpp"
#include "bpnp/simd/kernels.hpp"

namespace bpnp {

Linear Linear::Create(ParamStore& store, const std::string& name,
                      std::size_t in, std::size_t out, std::mt19937_64& rng,
                      double scale) {
  const double bound = scale / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out), b(out);
  for (double& v : w) v = dist(rng);
  for (double& v : b) v = dist(rng);
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.Add(name + "/weight", {out, in}, std::move(w));
  l.bias = store.Add(name + "/bias", {out}, std::move(b));
  return l;
}

Matrix Linear::Forward(const ParamStore& store, const Matrix& x) const {
  Require(x.cols() == in, ErrorKind::kInvalidInput, "linear input width mismatch");
  const auto& k = simd::Active();
  const double* W = store[weight].value.data();
  const double* b = store[bias].value.data();
  Matrix y(x.rows(), out);
  for (std::size_t p = 0; p < x.rows(); ++p) {
    double* yp = y.row(p).data();
    k.gemv(W, x.row(p).data(), yp, out, in);
    for (std::size_t o = 0; o < out; ++o) yp[o] += b[o];
  }
  return y;
}

Matrix Linear::Backward(ParamStore& store, const Matrix& x, const Matrix& dy) const {
  const auto& k = simd::Active();
  const double* W = store[weight].value.data();
  double* dW = store[weight].grad.data();
  double* db = store[bias].grad.data();
  Matrix dx(x.rows(), in);
  for (std::size_t p = 0; p < x.rows(); ++p) {
    const double* g = dy.row(p).data();
    const double* xp = x.row(p).data();
    for (std::size_t o = 0; o < out; ++o) {
      if (g[o] == 0.0) continue;
      k.axpy(g[o], xp, dW + o * in, in);
      db[o] += g[o];
    }
    k.gemv_transposed(W, g, dx.row(p).data(), out, in);
  }
  return dx;
}

Matrix ContextNormalize(const Matrix& x, ContextNormCache* cache) {
  const std::size_t P = x.rows(), C = x.cols();
  Require(P >= 2, ErrorKind::kInvalidInput, "context normalization needs >= 2 points");
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) mean[c] += x(p, c);
  }
  for (double& m : mean) m /= static_cast<double>(P);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = x(p, c) - mean[c];
      var[c] += d * d;
    }
  }
  std::vector<double> inv(C);
  for (std::size_t c = 0; c < C; ++c) {
    inv[c] = 1.0 / std::sqrt(var[c] / static_cast<double>(P) + kContextNormEps);
  }
  Matrix y(P, C);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) y(p, c) = (x(p, c) - mean[c]) * inv[c];
  }
  if (cache != nullptr) {
    cache->y = y;
    cache->inv_sigma = std::move(inv);
  }
  return y;
}

Matrix ContextNormalizeBackward(const ContextNormCache& cache, const Matrix& dy) {
  const std::size_t P = dy.rows(), C = dy.cols();
  std::vector<double> mean_dy(C, 0.0), mean_dyy(C, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      mean_dy[c] += dy(p, c);
      mean_dyy[c] += dy(p, c) * cache.y(p, c);
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    mean_dy[c] /= static_cast<double>(P);
    mean_dyy[c] /= static_cast<double>(P);
  }
  Matrix dx(P, C);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      dx(p, c) = cache.inv_sigma[c] *
                 (dy(p, c) - mean_dy[c] - cache.y(p, c) * mean_dyy[c]);
    }
  }
  return dx;
}

ChannelAffine ChannelAffine::Create(ParamStore& store, const std::string& name,
                                    std::size_t channels) {
  ChannelAffine a;
  a.channels = channels;
  a.gamma = store.Add(name + "/gamma", {channels}, std::vector<double>(channels, 1.0));
  a.beta = store.Add(name + "/beta", {channels}, std::vector<double>(channels, 0.0));
  return a;
}

Matrix ChannelAffine::Forward(const ParamStore& store, const Matrix& x) const {
  const auto& g = store[gamma].value;
  const auto& b = store[beta].value;
  Matrix y(x.rows(), x.cols());
  for (std::size_t p = 0; p < x.rows(); ++p) {
    for (std::size_t c = 0; c < channels; ++c) y(p, c) = g[c] * x(p, c) + b[c];
  }
  return y;
}

Matrix ChannelAffine::Backward(ParamStore& store, const Matrix& x,
                               const Matrix& dy) const {
  const auto& g = store[gamma].value;
  auto& dg = store[gamma].grad;
  auto& db = store[beta].grad;
  Matrix dx(x.rows(), x.cols());
  for (std::size_t p = 0; p < x.rows(); ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      dg[c] += dy(p, c) * x(p, c);
      db[c] += dy(p, c);
      dx(p, c) = g[c] * dy(p, c);
    }
  }
  return dx;
}

Matrix Relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix ReluBackward(const Matrix& x, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x.values()[i] > 0.0)) dx.values()[i] = 0.0;
  }
  return dx;
}

Matrix L2NormalizeRows(const Matrix& x, std::vector<double>* norms) {
  const auto& k = simd::Active();
  Matrix f(x.rows(), x.cols());
  if (norms != nullptr) norms->assign(x.rows(), 0.0);
  for (std::size_t p = 0; p < x.rows(); ++p) {
    const double n = std::sqrt(k.dot(x.row(p).data(), x.row(p).data(), x.cols()));
    Require(n > 0.0, ErrorKind::kNumericFailure, "zero-length feature row");
    for (std::size_t c = 0; c < x.cols(); ++c) f(p, c) = x(p, c) / n;
    if (norms != nullptr) (*norms)[p] = n;
  }
  return f;
}

Matrix L2NormalizeRowsBackward(const Matrix& f, const std::vector<double>& norms,
                               const Matrix& df) {
  const auto& k = simd::Active();
  Matrix dx(f.rows(), f.cols());
  for (std::size_t p = 0; p < f.rows(); ++p) {
    const double proj = k.dot(f.row(p).data(), df.row(p).data(), f.cols());
    for (std::size_t c = 0; c < f.cols(); ++c) {
      dx(p, c) = (df(p, c) - f(p, c) * proj) / norms[p];
    }
  }
  return dx;
}

void AddInPlace(Matrix& a, const Matrix& b) {
  Require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kContractViolation,
          "shape mismatch in add");
  for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += b.values()[i];
}

void CheckLayer(const Matrix& m, int layer) {
  if (!AllFinite(m)) throw NumericError(layer, "non-finite activation");
}

}  // namespace bpnp
