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

#include "bpnp/matrix.hpp"
#include "bpnp/params.hpp"

namespace bpnp {

// Point-wise building blocks shared by the feature network and the match
// classifier. Each Forward has a matching Backward that accumulates into the
// parameter gradient buffers and returns the input gradient.

// y_p = W x_p + b, W is (out x in).
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear Create(ParamStore& store, const std::string& name,
                       std::size_t in, std::size_t out, std::mt19937_64& rng,
                       double scale = 1.0);
  Matrix Forward(const ParamStore& store, const Matrix& x) const;
  Matrix Backward(ParamStore& store, const Matrix& x, const Matrix& dy) const;
};

// Per-channel standardisation across the point set, population variance
// plus eps under the square root.
struct ContextNormCache {
  Matrix y;
  std::vector<double> inv_sigma;
};

inline constexpr double kContextNormEps = 1e-8;

Matrix ContextNormalize(const Matrix& x, ContextNormCache* cache = nullptr);
Matrix ContextNormalizeBackward(const ContextNormCache& cache, const Matrix& dy);

// y = gamma * x + beta per channel.
struct ChannelAffine {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t channels = 0;

  static ChannelAffine Create(ParamStore& store, const std::string& name,
                              std::size_t channels);
  Matrix Forward(const ParamStore& store, const Matrix& x) const;
  Matrix Backward(ParamStore& store, const Matrix& x, const Matrix& dy) const;
};

Matrix Relu(const Matrix& x);
// Gradient through ReLU given its pre-activation input.
Matrix ReluBackward(const Matrix& x, const Matrix& dy);

// Row-wise L2 normalisation; backward applies (I - f f^T) / |x|.
Matrix L2NormalizeRows(const Matrix& x, std::vector<double>* norms = nullptr);
Matrix L2NormalizeRowsBackward(const Matrix& f, const std::vector<double>& norms,
                               const Matrix& df);

void AddInPlace(Matrix& a, const Matrix& b);

// Throws NumericError(layer) if `m` has a non-finite entry.
void CheckLayer(const Matrix& m, int layer);

}  // namespace bpnp
