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

#include <cstddef>
#include <string_view>

namespace bpnp::simd {

// Double-precision inner-loop kernels. Every variant computes the same
// mathematical result; vector variants may differ from the scalar reference
// in the last few ulps because of reassociation and fused multiply-add.
struct Kernels {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // out[r] = dot(m + r * n, x, n) for r in [0, rows)
  void (*gemv)(const double* m, const double* x, double* out, std::size_t rows,
               std::size_t n);
  // out[c] = sum_r m[r * n + c] * x[r] for c in [0, n); out is overwritten
  void (*gemv_transposed)(const double* m, const double* x, double* out,
                          std::size_t rows, std::size_t n);
};

const Kernels& ScalarKernels();

// Returns nullptr when the binary was built without AVX2 support or the CPU
// lacks AVX2/FMA.
const Kernels* Avx2Kernels();

// The variant selected at first use: AVX2 when available, otherwise scalar.
// BPNP_SIMD=scalar forces the reference path.
const Kernels& Active();

}  // namespace bpnp::simd
