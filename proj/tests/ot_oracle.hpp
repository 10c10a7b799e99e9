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

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bpnp/matrix.hpp"

namespace bpnp::testing {

// Minimiser of <H, W> - lambda E(W) over the transport polytope, found by
// Newton's method on the dual potentials: W_ij = exp((f_i + g_j - H_ij) / lambda)
// with the last g fixed to 0.
inline Matrix EntropicOtOracle(const Matrix& H, const std::vector<double>& r,
                               const std::vector<double>& s, double lambda) {
  const int M = static_cast<int>(H.rows()), N = static_cast<int>(H.cols());
  const int n = M + N - 1;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  auto plan = [&](const Eigen::VectorXd& z) {
    Eigen::MatrixXd W(M, N);
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < N; ++j) {
        const double g = j < N - 1 ? z[M + j] : 0.0;
        W(i, j) = std::exp((z[i] + g - H(i, j)) / lambda);
      }
    }
    return W;
  };
  // dual objective: sum f r + sum g s - lambda sum W (concave)
  auto dual = [&](const Eigen::VectorXd& z) {
    double v = -lambda * plan(z).sum();
    for (int i = 0; i < M; ++i) v += z[i] * r[i];
    for (int j = 0; j < N - 1; ++j) v += z[M + j] * s[j];
    return v;
  };
  for (int it = 0; it < 200; ++it) {
    const Eigen::MatrixXd W = plan(x);
    Eigen::VectorXd grad(n);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < M; ++i) grad[i] = r[i] - W.row(i).sum();
    for (int j = 0; j < N - 1; ++j) grad[M + j] = s[j] - W.col(j).sum();
    if (grad.cwiseAbs().maxCoeff() < 1e-15) break;
    for (int i = 0; i < M; ++i) {
      hess(i, i) = -W.row(i).sum() / lambda;
      for (int j = 0; j < N - 1; ++j) {
        hess(i, M + j) = hess(M + j, i) = -W(i, j) / lambda;
      }
    }
    for (int j = 0; j < N - 1; ++j) hess(M + j, M + j) = -W.col(j).sum() / lambda;
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);
    double t = 1.0;
    const double d0 = dual(x);
    while (t > 1e-12 && !(dual(x + t * step) >= d0)) t *= 0.5;
    x += t * step;
  }
  const Eigen::MatrixXd W = plan(x);
  Matrix out(M, N);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) out(i, j) = W(i, j);
  }
  return out;
}

}  // namespace bpnp::testing
