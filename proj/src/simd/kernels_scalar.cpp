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

#include "bpnp/simd/kernels.hpp"

namespace bpnp::simd {
namespace {

double Dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void Axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double SquaredDistance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void Gemv(const double* m, const double* x, double* out, std::size_t rows,
          std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = Dot(m + r * n, x, n);
}

void GemvTransposed(const double* m, const double* x, double* out,
                    std::size_t rows, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) Axpy(x[r], m + r * n, out, n);
}

}  // namespace

const Kernels& ScalarKernels() {
  static const Kernels kernels{"scalar", &Dot, &Axpy, &SquaredDistance, &Gemv,
                               &GemvTransposed};
  return kernels;
}

}  // namespace bpnp::simd
