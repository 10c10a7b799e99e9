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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "bpnp/error.hpp"
#include "bpnp/layers.hpp"
#include "bpnp/params.hpp"
#include "test_util.hpp"

namespace bpnp {
namespace {

using testing::FiniteDifferenceError;
using testing::RandomMatrix;

double Contract(const Matrix& a, const Matrix& g) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a.values()[k] * g.values()[k];
  return s;
}

TEST(ContextNorm, Moments) {
  std::mt19937_64 rng(1);
  const Matrix x = RandomMatrix(16, 8, rng, -3.0, 5.0);
  const Matrix y = ContextNormalize(x);
  for (std::size_t c = 0; c < 8; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t p = 0; p < 16; ++p) mean += y(p, c);
    mean /= 16;
    for (std::size_t p = 0; p < 16; ++p) var += (y(p, c) - mean) * (y(p, c) - mean);
    var /= 16;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-6);
    // independent recomputation of the map
    double mx = 0.0, vx = 0.0;
    for (std::size_t p = 0; p < 16; ++p) mx += x(p, c) / 16;
    for (std::size_t p = 0; p < 16; ++p) vx += (x(p, c) - mx) * (x(p, c) - mx) / 16;
    for (std::size_t p = 0; p < 16; ++p) {
      EXPECT_NEAR(y(p, c), (x(p, c) - mx) / std::sqrt(vx + kContextNormEps), 1e-12);
    }
  }
}

TEST(ContextNorm, ConstantChannelAndTwoPoints) {
  Matrix x(2, 2);
  x(0, 0) = -1.0;
  x(1, 0) = 1.0;
  x(0, 1) = 7.0;
  x(1, 1) = 7.0;
  const Matrix y = ContextNormalize(x);
  EXPECT_NEAR(y(0, 0), -1.0, 1e-8);
  EXPECT_NEAR(y(1, 0), 1.0, 1e-8);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_EQ(y(1, 1), 0.0);
}

TEST(ContextNorm, Idempotent) {
  std::mt19937_64 rng(2);
  const Matrix y = ContextNormalize(RandomMatrix(20, 6, rng));
  const Matrix z = ContextNormalize(y);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(y.values()[k], z.values()[k], 1e-6);
}

TEST(ContextNorm, NeedsTwoPoints) {
  try {
    ContextNormalize(Matrix(1, 4, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(ContextNorm, Gradient) {
  std::mt19937_64 rng(3);
  Matrix x = RandomMatrix(7, 4, rng);
  const Matrix g = RandomMatrix(7, 4, rng);
  ContextNormCache cache;
  ContextNormalize(x, &cache);
  const Matrix dx = ContextNormalizeBackward(cache, g);
  auto f = [&] { return Contract(ContextNormalize(x), g); };
  EXPECT_LT(FiniteDifferenceError(x.values(), dx.values(), f), 1e-6);
}

TEST(Linear, HandDerivedGradient) {
  ParamStore store;
  std::mt19937_64 rng(4);
  const Linear l = Linear::Create(store, "l", 3, 2, rng);
  store[l.weight].value = {1, 2, 3, 4, 5, 6};
  store[l.bias].value = {0.5, -0.5};
  Matrix x(1, 3);
  x(0, 0) = 1;
  x(0, 1) = -1;
  x(0, 2) = 2;
  const Matrix y = l.Forward(store, x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1 - 2 + 6 + 0.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 4 - 5 + 12 - 0.5);
  Matrix dy(1, 2);
  dy(0, 0) = 1.0;
  dy(0, 1) = 2.0;
  store.ZeroGrad();
  const Matrix dx = l.Backward(store, x, dy);
  // dW = dy^T x, db = dy, dx = dy W
  EXPECT_EQ(store[l.weight].grad, (std::vector<double>{1, -1, 2, 2, -2, 4}));
  EXPECT_EQ(store[l.bias].grad, (std::vector<double>{1, 2}));
  EXPECT_DOUBLE_EQ(dx(0, 0), 1 + 8);
  EXPECT_DOUBLE_EQ(dx(0, 1), 2 + 10);
  EXPECT_DOUBLE_EQ(dx(0, 2), 3 + 12);
}

TEST(Linear, FiniteDifferences) {
  ParamStore store;
  std::mt19937_64 rng(5);
  const Linear l = Linear::Create(store, "l", 5, 4, rng);
  Matrix x = RandomMatrix(6, 5, rng);
  const Matrix g = RandomMatrix(6, 4, rng);
  store.ZeroGrad();
  const Matrix dx = l.Backward(store, x, g);
  auto f = [&] { return Contract(l.Forward(store, x), g); };
  EXPECT_LT(FiniteDifferenceError(x.values(), dx.values(), f), 1e-7);
  auto grad_w = store[l.weight].grad;
  EXPECT_LT(FiniteDifferenceError(store[l.weight].value, grad_w, f), 1e-7);
  auto grad_b = store[l.bias].grad;
  EXPECT_LT(FiniteDifferenceError(store[l.bias].value, grad_b, f), 1e-7);
}

TEST(ChannelAffine, FiniteDifferences) {
  ParamStore store;
  std::mt19937_64 rng(6);
  const ChannelAffine a = ChannelAffine::Create(store, "a", 3);
  store[a.gamma].value = {0.5, -1.5, 2.0};
  store[a.beta].value = {0.1, 0.2, -0.3};
  Matrix x = RandomMatrix(5, 3, rng);
  const Matrix g = RandomMatrix(5, 3, rng);
  store.ZeroGrad();
  const Matrix dx = a.Backward(store, x, g);
  auto f = [&] { return Contract(a.Forward(store, x), g); };
  EXPECT_LT(FiniteDifferenceError(x.values(), dx.values(), f), 1e-7);
  auto gg = store[a.gamma].grad;
  EXPECT_LT(FiniteDifferenceError(store[a.gamma].value, gg, f), 1e-7);
  auto gb = store[a.beta].grad;
  EXPECT_LT(FiniteDifferenceError(store[a.beta].value, gb, f), 1e-7);
}

TEST(Relu, ForwardBackward) {
  Matrix x(1, 3);
  x(0, 0) = -1.0;
  x(0, 1) = 0.5;
  x(0, 2) = 2.0;
  const Matrix y = Relu(x);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.5, 2.0}));
  const Matrix dx = ReluBackward(x, Matrix(1, 3, 1.0));
  EXPECT_EQ(dx.values(), (std::vector<double>{0.0, 1.0, 1.0}));
}

TEST(L2Normalize, UnitRowsAndGradient) {
  std::mt19937_64 rng(7);
  Matrix x = RandomMatrix(6, 5, rng);
  const Matrix g = RandomMatrix(6, 5, rng);
  std::vector<double> norms;
  const Matrix f = L2NormalizeRows(x, &norms);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (double v : f.row(r)) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
  }
  const Matrix dx = L2NormalizeRowsBackward(f, norms, g);
  auto fn = [&] { return Contract(L2NormalizeRows(x), g); };
  EXPECT_LT(FiniteDifferenceError(x.values(), dx.values(), fn), 1e-7);
}

TEST(CheckLayer, ReportsLayer) {
  Matrix m(2, 2, 1.0);
  EXPECT_NO_THROW(CheckLayer(m, 3));
  m(1, 1) = std::numeric_limits<double>::infinity();
  try {
    CheckLayer(m, 3);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 3);
    EXPECT_EQ(e.kind(), ErrorKind::kNumericFailure);
  }
}

ParamStore TwoVariables(double x, double y) {
  ParamStore s;
  s.Add("xy", {2}, {x, y});
  s.ZeroGrad();
  return s;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore s = TwoVariables(1.0, -2.0);
  AdamState st;
  AdamStep(s, st, {});
  EXPECT_EQ(s[0].value, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  ParamStore s = TwoVariables(1.0, -2.0);
  s[0].grad = {0.3, -7.0};
  AdamState st;
  AdamOptions opt;
  opt.lr = 0.01;
  AdamStep(s, st, opt);
  EXPECT_NEAR(s[0].value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(s[0].value[1], -2.0 + 0.01, 1e-9);
}

TEST(Adam, QuadraticBowl) {
  ParamStore s = TwoVariables(3.0, -2.0);
  AdamState st;
  AdamOptions opt;
  opt.lr = 0.01;
  auto loss = [&] { return 2.0 * s[0].value[0] * s[0].value[0] + 0.5 * s[0].value[1] * s[0].value[1]; };
  std::vector<double> history;
  for (int step = 0; step < 100; ++step) {
    s[0].grad = {4.0 * s[0].value[0], s[0].value[1]};
    AdamStep(s, st, opt);
    history.push_back(loss());
  }
  for (std::size_t k = 5; k < history.size(); ++k) EXPECT_LT(history[k], history[k - 1]) << k;
}

TEST(Adam, RejectsNonFiniteGradientWithoutUpdating) {
  ParamStore s = TwoVariables(1.0, 1.0);
  s[0].grad = {1.0, std::nan("")};
  AdamState st;
  try {
    AdamStep(s, st, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericFailure);
  }
  EXPECT_EQ(s[0].value, (std::vector<double>{1.0, 1.0}));
}

TEST(Adam, MismatchedState) {
  ParamStore s = TwoVariables(1.0, 1.0);
  AdamState st;
  st.m = {{0.0}};
  st.v = {{0.0}};
  st.step = 1;
  EXPECT_THROW(AdamStep(s, st, {}), Error);
}

TEST(Checkpoint, RoundTrip) {
  ParamStore store;
  std::mt19937_64 rng(8);
  Linear::Create(store, "a", 3, 4, rng);
  ChannelAffine::Create(store, "b", 4);
  Checkpoint ck;
  ck.config = {{"width", 4}};
  AppendTensors(store, ck);
  const auto path = std::filesystem::temp_directory_path() / "bpnp_test_ckpt.bin";
  WriteCheckpoint(path, ck);
  const Checkpoint back = ReadCheckpoint(path);
  EXPECT_EQ(back.config, ck.config);
  ASSERT_EQ(back.tensors.size(), store.size());
  ParamStore other;
  std::mt19937_64 rng2(99);
  Linear::Create(other, "a", 3, 4, rng2);
  ChannelAffine::Create(other, "b", 4);
  EXPECT_FALSE(other.SameValues(store));
  LoadTensors(back, other);
  EXPECT_TRUE(other.SameValues(store));

  ParamStore wrong;
  Linear::Create(wrong, "a", 3, 5, rng2);
  try {
    LoadTensors(back, wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfiguration);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "bpnp_test_garbage.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(ReadCheckpoint(path), Error);
}

}  // namespace
}  // namespace bpnp
