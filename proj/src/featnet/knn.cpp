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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bpnp/error.hpp"
#include "bpnp/featnet.hpp"
#include "bpnp/simd/kernels.hpp"

namespace bpnp {

KnnGraph BuildKnnGraph(const Matrix& points, std::size_t k) {
  const std::size_t P = points.rows();
  Require(k >= 1 && k < P, ErrorKind::kInvalidInput,
          "knn needs 1 <= k < number of points");
  const auto& kern = simd::Active();
  KnnGraph g;
  g.k = k;
  g.neighbors.resize(P * k);
  std::vector<std::pair<double, std::uint32_t>> cand(P - 1);
  for (std::size_t q = 0; q < P; ++q) {
    std::size_t n = 0;
    for (std::size_t j = 0; j < P; ++j) {
      if (j == q) continue;
      cand[n++] = {kern.squared_distance(points.row(q).data(), points.row(j).data(),
                                         points.cols()),
                   static_cast<std::uint32_t>(j)};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k),
                      cand.end());
    for (std::size_t i = 0; i < k; ++i) g.neighbors[q * k + i] = cand[i].second;
  }
  return g;
}

EdgeConv EdgeConv::Create(ParamStore& store, const std::string& name,
                          std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> th(in * out), ph(in * out), b(out);
  for (double& v : th) v = dist(rng);
  for (double& v : ph) v = dist(rng);
  for (double& v : b) v = dist(rng);
  EdgeConv e;
  e.in = in;
  e.out = out;
  e.theta = store.Add(name + "/theta", {out, in}, std::move(th));
  e.phi = store.Add(name + "/phi", {out, in}, std::move(ph));
  e.bias = store.Add(name + "/bias", {out}, std::move(b));
  return e;
}

Matrix EdgeConv::Forward(const ParamStore& store, const Matrix& x,
                         const KnnGraph& graph, Cache* cache) const {
  Require(x.cols() == in && graph.num_points() == x.rows(), ErrorKind::kInvalidInput,
          "edge conv shape mismatch");
  const auto& kern = simd::Active();
  const std::size_t P = x.rows();
  const double inv_k = 1.0 / static_cast<double>(graph.k);
  Matrix diff(P, in);
  for (std::size_t q = 0; q < P; ++q) {
    double* d = diff.row(q).data();
    const std::uint32_t* nb = graph.row(q);
    for (std::size_t i = 0; i < graph.k; ++i) kern.axpy(inv_k, x.row(nb[i]).data(), d, in);
    kern.axpy(-1.0, x.row(q).data(), d, in);
  }
  const double* th = store[theta].value.data();
  const double* ph = store[phi].value.data();
  const double* b = store[bias].value.data();
  Matrix y(P, out);
  std::vector<double> tmp(out);
  for (std::size_t q = 0; q < P; ++q) {
    double* yq = y.row(q).data();
    kern.gemv(th, diff.row(q).data(), yq, out, in);
    kern.gemv(ph, x.row(q).data(), tmp.data(), out, in);
    for (std::size_t o = 0; o < out; ++o) yq[o] += tmp[o] + b[o];
  }
  if (cache != nullptr) cache->diff = std::move(diff);
  return y;
}

Matrix EdgeConv::Backward(ParamStore& store, const Matrix& x, const KnnGraph& graph,
                          const Cache& cache, const Matrix& dy) const {
  const auto& kern = simd::Active();
  const std::size_t P = x.rows();
  const double inv_k = 1.0 / static_cast<double>(graph.k);
  const double* th = store[theta].value.data();
  const double* ph = store[phi].value.data();
  double* dth = store[theta].grad.data();
  double* dph = store[phi].grad.data();
  double* db = store[bias].grad.data();
  Matrix dx(P, in);
  std::vector<double> ddiff(in), dphi_in(in);
  for (std::size_t q = 0; q < P; ++q) {
    const double* g = dy.row(q).data();
    for (std::size_t o = 0; o < out; ++o) {
      if (g[o] == 0.0) continue;
      kern.axpy(g[o], cache.diff.row(q).data(), dth + o * in, in);
      kern.axpy(g[o], x.row(q).data(), dph + o * in, in);
      db[o] += g[o];
    }
    kern.gemv_transposed(th, g, ddiff.data(), out, in);
    kern.gemv_transposed(ph, g, dphi_in.data(), out, in);
    double* dxq = dx.row(q).data();
    for (std::size_t c = 0; c < in; ++c) dxq[c] += dphi_in[c] - ddiff[c];
    const std::uint32_t* nb = graph.row(q);
    for (std::size_t i = 0; i < graph.k; ++i) {
      kern.axpy(inv_k, ddiff.data(), dx.row(nb[i]).data(), in);
    }
  }
  return dx;
}

Matrix ToMatrix(const std::vector<Eigen::Vector3d>& pts) {
  Matrix m(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int c = 0; c < 3; ++c) m(i, c) = pts[i][c];
  }
  return m;
}

Matrix ToMatrix(const std::vector<Eigen::Vector2d>& pts) {
  Matrix m(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int c = 0; c < 2; ++c) m(i, c) = pts[i][c];
  }
  return m;
}

}  // namespace bpnp
