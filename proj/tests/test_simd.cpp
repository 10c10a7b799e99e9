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

#include <cstdlib>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bpnp/simd/kernels.hpp"

namespace bpnp::simd {
namespace {

std::vector<double> Random(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double Tol(double scale) { return 1e-13 * (1.0 + scale); }

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    vec_ = Avx2Kernels();
    if (vec_ == nullptr) GTEST_SKIP() << "no AVX2 variant on this machine";
  }
  const Kernels& ref_ = ScalarKernels();
  const Kernels* vec_ = nullptr;
};

TEST_F(SimdEquivalence, Dot) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto a = Random(n, rng), b = Random(n, rng);
    const double r = ref_.dot(a.data(), b.data(), n);
    EXPECT_NEAR(vec_->dot(a.data(), b.data(), n), r, Tol(n)) << n;
  }
}

TEST_F(SimdEquivalence, SquaredDistance) {
  std::mt19937_64 rng(2);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto a = Random(n, rng), b = Random(n, rng);
    const double r = ref_.squared_distance(a.data(), b.data(), n);
    EXPECT_NEAR(vec_->squared_distance(a.data(), b.data(), n), r, Tol(r)) << n;
    EXPECT_EQ(vec_->squared_distance(a.data(), a.data(), n), 0.0);
  }
}

TEST_F(SimdEquivalence, Axpy) {
  std::mt19937_64 rng(3);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto x = Random(n, rng);
    auto y1 = Random(n, rng);
    auto y2 = y1;
    ref_.axpy(0.37, x.data(), y1.data(), n);
    vec_->axpy(0.37, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15);
  }
}

TEST_F(SimdEquivalence, Gemv) {
  std::mt19937_64 rng(4);
  for (std::size_t rows : {1u, 3u, 8u, 17u}) {
    for (std::size_t n : {1u, 4u, 5u, 13u, 128u}) {
      const auto m = Random(rows * n, rng), x = Random(n, rng), xr = Random(rows, rng);
      std::vector<double> o1(rows), o2(rows), t1(n, 9.0), t2(n, -9.0);
      ref_.gemv(m.data(), x.data(), o1.data(), rows, n);
      vec_->gemv(m.data(), x.data(), o2.data(), rows, n);
      for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(o1[r], o2[r], Tol(n));
      ref_.gemv_transposed(m.data(), xr.data(), t1.data(), rows, n);
      vec_->gemv_transposed(m.data(), xr.data(), t2.data(), rows, n);
      for (std::size_t c = 0; c < n; ++c) EXPECT_NEAR(t1[c], t2[c], Tol(rows));
    }
  }
}

TEST(SimdReference, MatchesLoops) {
  std::mt19937_64 rng(5);
  const Kernels& k = ScalarKernels();
  const std::size_t rows = 6, n = 9;
  const auto m = Random(rows * n, rng), x = Random(n, rng), xr = Random(rows, rng);
  std::vector<double> out(rows), outt(n, 1.0);
  k.gemv(m.data(), x.data(), out.data(), rows, n);
  k.gemv_transposed(m.data(), xr.data(), outt.data(), rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += m[r * n + c] * x[c];
    EXPECT_NEAR(out[r], s, 1e-14);
  }
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += m[r * n + c] * xr[r];
    EXPECT_NEAR(outt[c], s, 1e-14);
  }
}

TEST(SimdDispatch, ActiveIsOneOfTheVariants) {
  const Kernels& a = Active();
  const bool scalar_forced = [] {
    const char* e = std::getenv("BPNP_SIMD");
    return e != nullptr && std::string(e) == "scalar";
  }();
  if (scalar_forced || Avx2Kernels() == nullptr) {
    EXPECT_EQ(a.name, ScalarKernels().name);
  } else {
    EXPECT_EQ(a.name, Avx2Kernels()->name);
  }
}

}  // namespace
}  // namespace bpnp::simd
