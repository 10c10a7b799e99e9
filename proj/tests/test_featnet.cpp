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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "bpnp/error.hpp"
#include "bpnp/featnet.hpp"
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

TEST(Knn, CollinearExample) {
  Matrix p(3, 1);
  p(0, 0) = 0.0;
  p(1, 0) = 1.0;
  p(2, 0) = 10.0;
  const KnnGraph g = BuildKnnGraph(p, 1);
  EXPECT_EQ(g.neighbors, (std::vector<std::uint32_t>{1, 0, 1}));
}

TEST(Knn, FullNeighbourhoodIsAPermutation) {
  std::mt19937_64 rng(1);
  const Matrix p = RandomMatrix(9, 3, rng);
  const KnnGraph g = BuildKnnGraph(p, 8);
  for (std::size_t q = 0; q < 9; ++q) {
    std::vector<std::uint32_t> row(g.row(q), g.row(q) + 8);
    std::sort(row.begin(), row.end());
    std::vector<std::uint32_t> expect;
    for (std::uint32_t j = 0; j < 9; ++j) {
      if (j != q) expect.push_back(j);
    }
    EXPECT_EQ(row, expect);
  }
}

TEST(Knn, MatchesExhaustiveSort) {
  std::mt19937_64 rng(2);
  const Matrix p = RandomMatrix(64, 3, rng);
  const KnnGraph g = BuildKnnGraph(p, 10);
  for (std::size_t q = 0; q < 64; ++q) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t j = 0; j < 64; ++j) {
      if (j == q) continue;
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d += (p(q, c) - p(j, c)) * (p(q, c) - p(j, c));
      all.emplace_back(d, j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(g.row(q)[i], all[i].second);
  }
}

TEST(Knn, TiesByLowerIndex) {
  Matrix p(4, 1);
  p(0, 0) = 0.0;
  p(1, 0) = -1.0;
  p(2, 0) = 1.0;
  p(3, 0) = 5.0;
  const KnnGraph g = BuildKnnGraph(p, 2);
  EXPECT_EQ(g.row(0)[0], 1u);
  EXPECT_EQ(g.row(0)[1], 2u);
}

TEST(Knn, RejectsLargeK) {
  try {
    BuildKnnGraph(Matrix(5, 2), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

struct EdgeFixture {
  ParamStore store;
  EdgeConv edge;
  EdgeFixture(std::size_t in, std::size_t out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    edge = EdgeConv::Create(store, "e", in, out, rng);
  }
};

TEST(EdgeConv, LoopOracle) {
  EdgeFixture fx(3, 5, 3);
  std::mt19937_64 rng(4);
  const Matrix x = RandomMatrix(4, 3, rng);
  const KnnGraph g = BuildKnnGraph(x, 2);
  const Matrix y = fx.edge.Forward(fx.store, x, g, nullptr);
  const auto& th = fx.store[fx.edge.theta].value;
  const auto& ph = fx.store[fx.edge.phi].value;
  const auto& b = fx.store[fx.edge.bias].value;
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t o = 0; o < 5; ++o) {
      double acc = 0.0;
      for (std::size_t n = 0; n < 2; ++n) {
        const std::size_t nb = g.row(q)[n];
        for (std::size_t c = 0; c < 3; ++c) {
          acc += th[o * 3 + c] * (x(nb, c) - x(q, c)) + ph[o * 3 + c] * x(q, c);
        }
      }
      EXPECT_NEAR(y(q, o), acc / 2.0 + b[o], 1e-12);
    }
  }
}

TEST(EdgeConv, IdenticalFeaturesAndIdentityMaps) {
  EdgeFixture fx(3, 3, 5);
  std::mt19937_64 rng(6);
  Matrix coords = RandomMatrix(6, 3, rng);
  const KnnGraph g = BuildKnnGraph(coords, 3);
  auto& b = fx.store[fx.edge.bias].value;
  std::fill(b.begin(), b.end(), 0.0);
  // identical features: the edge term vanishes and row q is phi o_q
  Matrix same(6, 3);
  for (std::size_t q = 0; q < 6; ++q) {
    same(q, 0) = 0.3;
    same(q, 1) = -1.2;
    same(q, 2) = 2.0;
  }
  const Matrix y = fx.edge.Forward(fx.store, same, g, nullptr);
  const auto& ph = fx.store[fx.edge.phi].value;
  for (std::size_t q = 0; q < 6; ++q) {
    for (std::size_t o = 0; o < 3; ++o) {
      const double expect = ph[o * 3] * 0.3 + ph[o * 3 + 1] * -1.2 + ph[o * 3 + 2] * 2.0;
      EXPECT_NEAR(y(q, o), expect, 1e-14);
    }
  }
  // theta = 0, phi = I: identity
  auto& th = fx.store[fx.edge.theta].value;
  auto& phm = fx.store[fx.edge.phi].value;
  std::fill(th.begin(), th.end(), 0.0);
  std::fill(phm.begin(), phm.end(), 0.0);
  for (int k = 0; k < 3; ++k) phm[k * 3 + k] = 1.0;
  const Matrix z = fx.edge.Forward(fx.store, coords, g, nullptr);
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(z.values()[k], coords.values()[k]);
}

TEST(EdgeConv, ShapeMismatch) {
  EdgeFixture fx(3, 3, 7);
  std::mt19937_64 rng(8);
  const Matrix x = RandomMatrix(6, 3, rng);
  const KnnGraph g = BuildKnnGraph(RandomMatrix(5, 3, rng), 2);
  EXPECT_THROW(fx.edge.Forward(fx.store, x, g, nullptr), Error);
  EXPECT_THROW(fx.edge.Forward(fx.store, RandomMatrix(5, 4, rng), g, nullptr), Error);
}

TEST(EdgeConv, FarPaddingLeavesOriginalRows) {
  EdgeFixture fx(3, 8, 9);
  std::mt19937_64 rng(10);
  const Matrix x = RandomMatrix(20, 3, rng);
  Matrix doubled(40, 3);
  for (std::size_t q = 0; q < 20; ++q) {
    for (int c = 0; c < 3; ++c) {
      doubled(q, c) = x(q, c);
      doubled(q + 20, c) = x(q, c) + (c == 0 ? 1e3 : 0.0);
    }
  }
  const KnnGraph g = BuildKnnGraph(x, 5);
  const KnnGraph g2 = BuildKnnGraph(doubled, 5);
  for (std::size_t q = 0; q < 20; ++q) {
    EXPECT_TRUE(std::equal(g.row(q), g.row(q) + 5, g2.row(q)));
  }
  const Matrix y = fx.edge.Forward(fx.store, x, g, nullptr);
  const Matrix y2 = fx.edge.Forward(fx.store, doubled, g2, nullptr);
  for (std::size_t q = 0; q < 20; ++q) {
    for (std::size_t o = 0; o < 8; ++o) EXPECT_EQ(y(q, o), y2(q, o));
  }
}

TEST(EdgeConv, FiniteDifferences) {
  EdgeFixture fx(4, 3, 11);
  std::mt19937_64 rng(12);
  Matrix x = RandomMatrix(7, 4, rng);
  const KnnGraph g = BuildKnnGraph(RandomMatrix(7, 2, rng), 3);
  const Matrix dy = RandomMatrix(7, 3, rng);
  EdgeConv::Cache cache;
  fx.edge.Forward(fx.store, x, g, &cache);
  fx.store.ZeroGrad();
  const Matrix dx = fx.edge.Backward(fx.store, x, g, cache, dy);
  auto f = [&] { return Contract(fx.edge.Forward(fx.store, x, g, nullptr), dy); };
  EXPECT_LT(FiniteDifferenceError(x.values(), dx.values(), f), 1e-7);
  for (std::size_t t : {fx.edge.theta, fx.edge.phi, fx.edge.bias}) {
    auto grad = fx.store[t].grad;
    EXPECT_LT(FiniteDifferenceError(fx.store[t].value, grad, f), 1e-7);
  }
}

FeatureNetConfig SmallNet() {
  FeatureNetConfig cfg;
  cfg.width = 16;
  cfg.blocks = 2;
  cfg.knn = 4;
  cfg.transform_hidden = 8;
  cfg.transform_init_noise = 0.1;  // visible transform gradients
  cfg.seed = 3;
  return cfg;
}

TEST(FeatureNet, UnitNormRows) {
  FeatureNetConfig cfg = SmallNet();
  cfg.width = 32;
  const FeatureNet net(cfg);
  std::mt19937_64 rng(13);
  for (Stream s : {Stream::k2D, Stream::k3D}) {
    const Matrix f = net.Forward(s, RandomMatrix(40, s == Stream::k3D ? 3 : 2, rng));
    EXPECT_EQ(f.cols(), 32u);
    for (std::size_t r = 0; r < f.rows(); ++r) {
      double n = 0.0;
      for (double v : f.row(r)) n += v * v;
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    }
  }
}

TEST(FeatureNet, PermutationEquivariance) {
  const FeatureNet net(SmallNet());
  std::mt19937_64 rng(14);
  for (Stream s : {Stream::k2D, Stream::k3D}) {
    const Matrix x = RandomMatrix(30, s == Stream::k3D ? 3 : 2, rng);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Matrix f = net.Forward(s, x);
    const Matrix fp = net.Forward(s, PermuteRows(x, perm));
    const Matrix expect = PermuteRows(f, perm);
    for (std::size_t k = 0; k < f.size(); ++k) {
      EXPECT_NEAR(fp.values()[k], expect.values()[k], 1e-12);
    }
  }
}

TEST(FeatureNet, StreamsDoNotShareWeights) {
  const FeatureNet net(SmallNet());
  std::size_t n2 = 0, n3 = 0;
  for (const auto& t : net.params().tensors()) {
    n2 += t.name.rfind("featnet2d/", 0) == 0;
    n3 += t.name.rfind("featnet3d/", 0) == 0;
  }
  EXPECT_GT(n2, 0u);
  EXPECT_EQ(n2 + n3, net.params().size());
  EXPECT_GT(n3, n2);  // the 3D stream carries the input transform
}

TEST(FeatureNet, NonFiniteInputReportsLayer) {
  const FeatureNet net(SmallNet());
  std::mt19937_64 rng(15);
  Matrix x = RandomMatrix(10, 3, rng);
  x(4, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    net.Forward(Stream::k3D, x);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 0);
  }
}

TEST(FeatureNet, BackwardNeedsCache) {
  FeatureNet net(SmallNet());
  FeatureNet::Cache empty;
  try {
    net.Backward(Stream::k2D, empty, Matrix(3, 16));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContractViolation);
  }
}

TEST(FeatureNet, ZeroUpstreamGradient) {
  FeatureNet net(SmallNet());
  std::mt19937_64 rng(16);
  FeatureNet::Cache cache;
  net.Forward(Stream::k3D, RandomMatrix(12, 3, rng), &cache);
  net.params().ZeroGrad();
  net.Backward(Stream::k3D, cache, Matrix(12, 16));
  for (const auto& t : net.params().tensors()) {
    for (double g : t.grad) EXPECT_EQ(g, 0.0);
  }
}

class FeatureNetGradient : public ::testing::TestWithParam<Stream> {};

TEST_P(FeatureNetGradient, MatchesFiniteDifferences) {
  const Stream stream = GetParam();
  FeatureNet net(SmallNet());
  std::mt19937_64 rng(17);
  Matrix x = RandomMatrix(12, stream == Stream::k3D ? 3 : 2, rng);
  const Matrix g = RandomMatrix(12, 16, rng);
  FeatureNet::Cache cache;
  net.Forward(stream, x, &cache);
  net.params().ZeroGrad();
  const Matrix dx = net.Backward(stream, cache, g);
  auto f = [&] { return Contract(net.Forward(stream, x), g); };
  const std::string prefix = stream == Stream::k3D ? "featnet3d/" : "featnet2d/";
  // Errors are relative to the largest gradient of the stream so that
  // tensors with an exactly zero gradient are judged on the same scale.
  double scale = 0.0;
  for (const auto& t : net.params().tensors()) {
    for (double v : t.grad) scale = std::max(scale, std::abs(v));
  }
  ASSERT_GT(scale, 0.0);
  for (auto& t : net.params().tensors()) {
    if (t.name.rfind(prefix, 0) != 0) {
      for (double v : t.grad) EXPECT_EQ(v, 0.0) << t.name;
      continue;
    }
    const auto grad = t.grad;
    EXPECT_LT(FiniteDifferenceError(t.value, grad, f, 1e-5, scale), 1e-4) << t.name;
    // context normalisation removes any per-channel constant
    if (t.name.find("/edge/bias") != std::string::npos) {
      for (double v : grad) EXPECT_LT(std::abs(v), 1e-12 * scale) << t.name;
    }
  }
  // Input gradient with the KNN graph held fixed: perturbations this small
  // do not reorder neighbours of a random cloud.
  EXPECT_LT(FiniteDifferenceError(x.values(), dx.values(), f), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Streams, FeatureNetGradient,
                         ::testing::Values(Stream::k2D, Stream::k3D));

TEST(FeatureNet, ConfigJsonRoundTrip) {
  const FeatureNetConfig cfg = SmallNet();
  const FeatureNetConfig back = FeatureNetConfig::FromJson(cfg.ToJson());
  EXPECT_EQ(back.ToJson(), cfg.ToJson());
  EXPECT_THROW(FeatureNetConfig::FromJson({{"width", 0}}), Error);
}

}  // namespace
}  // namespace bpnp
