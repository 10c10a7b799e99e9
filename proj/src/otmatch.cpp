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

#include "bpnp/otmatch.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include "bpnp/error.hpp"
#include "bpnp/params.hpp"
#include "bpnp/simd/kernels.hpp"

namespace bpnp {

MarginalPriors MarginalPriors::Uniform(std::size_t M, std::size_t N) {
  return {std::vector<double>(M, 1.0 / static_cast<double>(M)),
          std::vector<double>(N, 1.0 / static_cast<double>(N))};
}

void MarginalPriors::Validate() const {
  Require(!r.empty() && !s.empty(), ErrorKind::kInvalidInput, "empty priors");
  auto check = [](const std::vector<double>& v, const char* name) {
    double sum = 0.0;
    for (double x : v) {
      Require(x >= 0.0 && std::isfinite(x), ErrorKind::kInvalidInput,
              std::string(name) + " must be non-negative");
      sum += x;
    }
    Require(std::abs(sum - 1.0) <= 1e-12 * static_cast<double>(v.size()) + 1e-12,
            ErrorKind::kInvalidInput, std::string(name) + " must sum to 1");
  };
  check(r, "r");
  check(s, "s");
}

Matrix CostMatrix(const Matrix& f3d, const Matrix& f2d) {
  Require(f3d.cols() == f2d.cols(), ErrorKind::kInvalidInput,
          "feature dimension mismatch");
  const auto& k = simd::Active();
  Matrix H(f3d.rows(), f2d.rows());
  for (std::size_t i = 0; i < f3d.rows(); ++i) {
    for (std::size_t j = 0; j < f2d.rows(); ++j) {
      H(i, j) = std::sqrt(k.squared_distance(f3d.row(i).data(), f2d.row(j).data(),
                                             f3d.cols()));
    }
  }
  return H;
}

void CostMatrixBackward(const Matrix& f3d, const Matrix& f2d, const Matrix& H,
                        const Matrix& dH, Matrix& df3d, Matrix& df2d) {
  const std::size_t d = f3d.cols();
  if (df3d.rows() != f3d.rows()) df3d = Matrix(f3d.rows(), d);
  if (df2d.rows() != f2d.rows()) df2d = Matrix(f2d.rows(), d);
  for (std::size_t i = 0; i < f3d.rows(); ++i) {
    for (std::size_t j = 0; j < f2d.rows(); ++j) {
      const double h = H(i, j);
      if (h < 1e-12 || dH(i, j) == 0.0) continue;
      const double g = dH(i, j) / h;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = g * (f3d(i, c) - f2d(j, c));
        df3d(i, c) += diff;
        df2d(j, c) -= diff;
      }
    }
  }
}

namespace {

double MinEntry(const Matrix& H) {
  return *std::min_element(H.values().begin(), H.values().end());
}

double LogSumExp(const double* v, std::size_t n, std::size_t stride = 1) {
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i * stride] - mx);
  return mx + std::log(acc);
}

SinkhornResult SinkhornLog(const Matrix& H, const MarginalPriors& pr,
                           const SinkhornOptions& opt) {
  const std::size_t M = H.rows(), N = H.cols();
  Matrix logK(M, N);
  for (std::size_t i = 0; i < H.size(); ++i) logK.values()[i] = -H.values()[i] / opt.lambda;
  const double lse = LogSumExp(logK.data(), logK.size());
  for (double& v : logK.values()) v -= lse;
  std::vector<double> f(M, 0.0), g(N, 0.0), tmp(std::max(M, N));
  SinkhornResult res;
  res.log_domain = true;
  for (int it = 0; it < opt.iters; ++it) {
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) tmp[j] = logK(i, j) + g[j];
      f[i] = std::log(pr.r[i]) - LogSumExp(tmp.data(), N);
    }
    for (std::size_t j = 0; j < N; ++j) {
      for (std::size_t i = 0; i < M; ++i) tmp[i] = logK(i, j) + f[i];
      g[j] = std::log(pr.s[j]) - LogSumExp(tmp.data(), M);
    }
    res.iterations = it + 1;
    if (opt.tol > 0.0) {
      double err = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) tmp[j] = logK(i, j) + g[j];
        err = std::max(err, std::abs(std::exp(f[i] + LogSumExp(tmp.data(), N)) - pr.r[i]));
      }
      if (err <= opt.tol) break;
    }
  }
  res.W = Matrix(M, N);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) res.W(i, j) = std::exp(f[i] + logK(i, j) + g[j]);
  }
  res.a.resize(M);
  res.b.resize(N);
  for (std::size_t i = 0; i < M; ++i) res.a[i] = std::exp(f[i]);
  for (std::size_t j = 0; j < N; ++j) res.b[j] = std::exp(g[j]);
  return res;
}

SinkhornResult SinkhornLinear(const Matrix& H, const MarginalPriors& pr, double lambda,
                              int iters, double tol, bool record) {
  const auto& k = simd::Active();
  const std::size_t M = H.rows(), N = H.cols();
  const double hmin = MinEntry(H);
  Matrix unscaled(M, N);
  for (std::size_t i = 0; i < H.size(); ++i) {
    unscaled.values()[i] = std::exp(-(H.values()[i] - hmin) / lambda);
  }
  const double mass = std::accumulate(unscaled.values().begin(), unscaled.values().end(), 0.0);
  Matrix Y = unscaled;
  for (double& v : Y.values()) v /= mass;

  SinkhornResult res;
  if (record) res.recording.emplace();
  std::vector<double> a(M, 1.0), b(N, 1.0), Yb(M), Yta(N);
  if (record) res.recording->b.push_back(b);
  for (int it = 0; it < iters; ++it) {
    k.gemv(Y.data(), b.data(), Yb.data(), M, N);
    for (std::size_t i = 0; i < M; ++i) {
      if (!(Yb[i] > 0.0)) {
        Fail(ErrorKind::kNumericFailure,
             "sinkhorn row underflow; increase lambda or use the log domain");
      }
      a[i] = pr.r[i] / Yb[i];
    }
    k.gemv_transposed(Y.data(), a.data(), Yta.data(), M, N);
    for (std::size_t j = 0; j < N; ++j) {
      if (!(Yta[j] > 0.0)) {
        Fail(ErrorKind::kNumericFailure,
             "sinkhorn column underflow; increase lambda or use the log domain");
      }
      b[j] = pr.s[j] / Yta[j];
    }
    res.iterations = it + 1;
    if (record) {
      res.recording->a.push_back(a);
      res.recording->b.push_back(b);
    }
    if (tol > 0.0) {
      k.gemv(Y.data(), b.data(), Yb.data(), M, N);
      double err = 0.0;
      for (std::size_t i = 0; i < M; ++i) err = std::max(err, std::abs(a[i] * Yb[i] - pr.r[i]));
      if (err <= tol) break;
    }
  }
  if (iters == 0) std::fill(a.begin(), a.end(), 1.0);
  res.W = Matrix(M, N);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) res.W(i, j) = a[i] * Y(i, j) * b[j];
  }
  res.a = std::move(a);
  res.b = std::move(b);
  if (record) {
    res.recording->upsilon = std::move(Y);
    res.recording->unscaled = std::move(unscaled);
    res.recording->mass = mass;
  }
  return res;
}

}  // namespace

SinkhornResult Sinkhorn(const Matrix& H, const MarginalPriors& priors,
                        const SinkhornOptions& opt) {
  Require(opt.lambda > 0.0, ErrorKind::kInvalidInput, "lambda must be > 0");
  Require(opt.iters >= 1, ErrorKind::kInvalidInput, "sinkhorn needs iters >= 1");
  Require(H.rows() == priors.r.size() && H.cols() == priors.s.size(),
          ErrorKind::kInvalidInput, "cost matrix does not match priors");
  Require(AllFinite(H), ErrorKind::kInvalidInput, "non-finite cost matrix");
  priors.Validate();
  SinkhornDomain domain = opt.domain;
  if (domain == SinkhornDomain::kAuto) {
    const double hmin = MinEntry(H);
    const double hmax = *std::max_element(H.values().begin(), H.values().end());
    // exp(-(hmax - hmin) / lambda) must stay a normal double with headroom
    // for the row sums.
    domain = (hmax - hmin) / opt.lambda > 600.0 ? SinkhornDomain::kLog
                                                : SinkhornDomain::kLinear;
  }
  if (domain == SinkhornDomain::kLog) {
    Require(!opt.record, ErrorKind::kNumericFailure,
            "unrolled recording needs the linear domain; increase lambda");
    return SinkhornLog(H, priors, opt);
  }
  return SinkhornLinear(H, priors, opt.lambda, opt.iters, opt.tol, opt.record);
}

SinkhornResult SinkhornUnrolled(const Matrix& H, const MarginalPriors& priors,
                                double lambda, int iters) {
  Require(lambda > 0.0 && iters >= 0, ErrorKind::kInvalidInput,
          "unrolled sinkhorn needs lambda > 0 and iters >= 0");
  Require(H.rows() == priors.r.size() && H.cols() == priors.s.size(),
          ErrorKind::kInvalidInput, "cost matrix does not match priors");
  return SinkhornLinear(H, priors, lambda, iters, 0.0, true);
}

Matrix SinkhornBackward(const SinkhornResult& res, const Matrix& G, double lambda) {
  Require(res.recording.has_value(), ErrorKind::kContractViolation,
          "sinkhorn backward needs a recorded forward pass");
  const auto& rec = *res.recording;
  const Matrix& Y = rec.upsilon;
  const std::size_t M = Y.rows(), N = Y.cols();
  const int T = static_cast<int>(rec.a.size());
  Matrix dY(M, N);
  std::vector<double> da(M, 0.0), db(N, 0.0);
  const std::vector<double> ones_m(M, 1.0);
  const std::vector<double>& aT = T > 0 ? rec.a.back() : ones_m;
  const std::vector<double>& bT = rec.b.back();
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const double g = G(i, j);
      dY(i, j) += g * aT[i] * bT[j];
      da[i] += g * Y(i, j) * bT[j];
      db[j] += g * Y(i, j) * aT[i];
    }
  }
  std::vector<double> c(N), e(M), dc(N), de(M);
  for (int t = T; t >= 1; --t) {
    const auto& at = rec.a[t - 1];
    const auto& bt = rec.b[t];
    const auto& bprev = rec.b[t - 1];
    // b_t = s / (Y^T a_t)
    std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) c[j] += Y(i, j) * at[i];
    }
    for (std::size_t j = 0; j < N; ++j) dc[j] = -db[j] * bt[j] / c[j];
    for (std::size_t i = 0; i < M; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        dY(i, j) += at[i] * dc[j];
        acc += Y(i, j) * dc[j];
      }
      da[i] += acc;
    }
    // a_t = r / (Y b_{t-1})
    for (std::size_t i = 0; i < M; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += Y(i, j) * bprev[j];
      e[i] = acc;
      de[i] = -da[i] * at[i] / e[i];
    }
    std::fill(db.begin(), db.end(), 0.0);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        dY(i, j) += de[i] * bprev[j];
        db[j] += Y(i, j) * de[i];
      }
    }
    std::fill(da.begin(), da.end(), 0.0);
  }
  double inner = 0.0;
  for (std::size_t k = 0; k < dY.size(); ++k) inner += dY.values()[k] * Y.values()[k];
  Matrix dH(M, N);
  for (std::size_t k = 0; k < dY.size(); ++k) {
    const double dU = (dY.values()[k] - inner) / rec.mass;
    dH.values()[k] = -rec.unscaled.values()[k] / lambda * dU;
  }
  return dH;
}

double JointProbabilityLoss(const Matrix& W, std::span<const IndexPair> gt, Matrix* dW) {
  Matrix coeff(W.rows(), W.cols(), 1.0);
  for (const auto& m : gt) {
    Require(m.i3d < W.rows() && m.i2d < W.cols(), ErrorKind::kInvalidInput,
            "gt index out of range");
    coeff(m.i3d, m.i2d) = -1.0;
  }
  double L = 0.0;
  for (std::size_t k = 0; k < W.size(); ++k) L += coeff.values()[k] * W.values()[k];
  if (dW != nullptr) *dW = std::move(coeff);
  return L;
}

double WeightedReprojectionLoss(const Matrix& W, const PointSet3D& x3d,
                                const PointSet2D& y2d_norm, const Pose& pose, Matrix* dW) {
  Require(y2d_norm.frame == Frame::kNormalized, ErrorKind::kInvalidInput,
          "reprojection loss expects normalized 2D points");
  Require(W.rows() == x3d.size() && W.cols() == y2d_norm.size(), ErrorKind::kInvalidInput,
          "weight matrix does not match point sets");
  Matrix res(W.rows(), W.cols());
  double L = 0.0;
  for (std::size_t i = 0; i < W.rows(); ++i) {
    for (std::size_t j = 0; j < W.cols(); ++j) {
      res(i, j) = AngularResidual(pose, x3d.points[i], y2d_norm.points[j]);
      L += W(i, j) * res(i, j);
    }
  }
  if (dW != nullptr) *dW = std::move(res);
  return L;
}

namespace {

double Softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double TripletLoss(const Matrix& f3d, const Matrix& f2d, std::span<const IndexPair> gt,
                   double alpha, Rng& rng, Matrix* df3d, Matrix* df2d) {
  Require(f3d.cols() == f2d.cols(), ErrorKind::kInvalidInput, "feature dimension mismatch");
  const std::size_t d = f3d.cols();
  if (df3d != nullptr && df3d->rows() != f3d.rows()) *df3d = Matrix(f3d.rows(), d);
  if (df2d != nullptr && df2d->rows() != f2d.rows()) *df2d = Matrix(f2d.rows(), d);
  const auto& k = simd::Active();
  double L = 0.0;
  for (const auto& m : gt) {
    Require(m.i3d < f3d.rows() && m.i2d < f2d.rows(), ErrorKind::kInvalidInput,
            "gt index out of range");
    if (f2d.rows() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick(0, f2d.rows() - 2);
    std::size_t neg = pick(rng);
    if (neg >= m.i2d) ++neg;
    const double* a = f3d.row(m.i3d).data();
    const double* p = f2d.row(m.i2d).data();
    const double* n = f2d.row(neg).data();
    const double z = alpha * (k.squared_distance(a, p, d) - k.squared_distance(a, n, d));
    L += Softplus(z);
    if (df3d == nullptr) continue;
    const double g = 2.0 * alpha * Sigmoid(z);
    for (std::size_t c = 0; c < d; ++c) {
      (*df3d)(m.i3d, c) += g * (n[c] - p[c]);
      (*df2d)(m.i2d, c) -= g * (a[c] - p[c]);
      (*df2d)(neg, c) += g * (a[c] - n[c]);
    }
  }
  return L;
}

const char* LossName(LossKind k) {
  switch (k) {
    case LossKind::kJointProbability: return "joint_probability";
    case LossKind::kReprojection: return "reprojection";
    case LossKind::kTriplet: return "triplet";
  }
  return "joint_probability";
}

LossKind ParseLoss(const std::string& name) {
  if (name == "joint_probability") return LossKind::kJointProbability;
  if (name == "reprojection") return LossKind::kReprojection;
  if (name == "triplet") return LossKind::kTriplet;
  Fail(ErrorKind::kConfiguration, "unknown loss '" + name + "'");
}

FeatureLossResult LossGradientWrtFeatures(LossKind kind, const Matrix& f3d,
                                          const Matrix& f2d, const LossInputs& in,
                                          double lambda, int iters, Rng& rng) {
  FeatureLossResult out;
  out.df3d = Matrix(f3d.rows(), f3d.cols());
  out.df2d = Matrix(f2d.rows(), f2d.cols());
  if (kind == LossKind::kTriplet) {
    out.loss = TripletLoss(f3d, f2d, in.gt, in.triplet_alpha, rng, &out.df3d, &out.df2d);
    return out;
  }
  const Matrix H = CostMatrix(f3d, f2d);
  SinkhornResult sk =
      SinkhornUnrolled(H, MarginalPriors::Uniform(f3d.rows(), f2d.rows()), lambda, iters);
  Matrix dW;
  if (kind == LossKind::kJointProbability) {
    out.loss = JointProbabilityLoss(sk.W, in.gt, &dW);
  } else {
    Require(in.x3d != nullptr && in.y2d_norm != nullptr && in.pose_gt != nullptr,
            ErrorKind::kInvalidInput, "reprojection loss needs geometry");
    out.loss = WeightedReprojectionLoss(sk.W, *in.x3d, *in.y2d_norm, *in.pose_gt, &dW);
  }
  const Matrix dH = SinkhornBackward(sk, dW, lambda);
  CostMatrixBackward(f3d, f2d, H, dH, out.df3d, out.df2d);
  out.W = std::move(sk.W);
  return out;
}

const char* StrategyName(RetrievalStrategy s) {
  switch (s) {
    case RetrievalStrategy::kTopKW: return "topk_w";
    case RetrievalStrategy::kTopKF: return "topk_f";
    case RetrievalStrategy::kNNW: return "nn_w";
    case RetrievalStrategy::kNNF: return "nn_f";
    case RetrievalStrategy::kMNNW: return "mnn_w";
    case RetrievalStrategy::kMNNF: return "mnn_f";
  }
  return "topk_w";
}

RetrievalStrategy ParseStrategy(const std::string& name) {
  for (auto s : kAllStrategies) {
    if (name == StrategyName(s)) return s;
  }
  Fail(ErrorKind::kConfiguration, "unknown retrieval strategy '" + name + "'");
}

namespace {

MatchList TopK(const Matrix& S, std::size_t K, bool descending) {
  const std::size_t MN = S.size();
  Require(K <= MN, ErrorKind::kInvalidInput, "K exceeds M*N");
  std::vector<std::uint32_t> idx(MN);
  std::iota(idx.begin(), idx.end(), 0u);
  const auto& v = S.values();
  auto better = [&](std::uint32_t x, std::uint32_t y) {
    if (v[x] != v[y]) return descending ? v[x] > v[y] : v[x] < v[y];
    return x < y;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(K), idx.end(), better);
  MatchList out;
  out.matches.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    out.matches.push_back({static_cast<std::uint32_t>(idx[k] / S.cols()),
                           static_cast<std::uint32_t>(idx[k] % S.cols()), v[idx[k]]});
  }
  return out;
}

// best_i[j] over rows for each column, best_j[i] over columns for each row.
void BestIndices(const Matrix& S, bool maximize, std::vector<std::uint32_t>& best_i,
                 std::vector<std::uint32_t>& best_j) {
  const std::size_t M = S.rows(), N = S.cols();
  best_i.assign(N, 0);
  best_j.assign(M, 0);
  auto better = [maximize](double a, double b) { return maximize ? a > b : a < b; };
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t i = 1; i < M; ++i) {
      if (better(S(i, j), S(best_i[j], j))) best_i[j] = static_cast<std::uint32_t>(i);
    }
  }
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 1; j < N; ++j) {
      if (better(S(i, j), S(i, best_j[i]))) best_j[i] = static_cast<std::uint32_t>(j);
    }
  }
}

MatchList NearestNeighbours(const Matrix& S, bool maximize, bool mutual) {
  std::vector<std::uint32_t> best_i, best_j;
  BestIndices(S, maximize, best_i, best_j);
  MatchList out;
  for (std::size_t j = 0; j < S.cols(); ++j) {
    const std::uint32_t i = best_i[j];
    if (mutual && best_j[i] != j) continue;
    out.matches.push_back({i, static_cast<std::uint32_t>(j), S(i, j)});
  }
  return out;
}

}  // namespace

MatchList Retrieve(const Matrix& W, const Matrix& H, RetrievalStrategy strategy,
                   std::size_t K) {
  Require(W.rows() == H.rows() && W.cols() == H.cols() && !W.empty(),
          ErrorKind::kInvalidInput, "W and H must share a non-empty shape");
  switch (strategy) {
    case RetrievalStrategy::kTopKW: return TopK(W, K, true);
    case RetrievalStrategy::kTopKF: return TopK(H, K, false);
    case RetrievalStrategy::kNNW: return NearestNeighbours(W, true, false);
    case RetrievalStrategy::kNNF: return NearestNeighbours(H, false, false);
    case RetrievalStrategy::kMNNW: return NearestNeighbours(W, true, true);
    case RetrievalStrategy::kMNNF: return NearestNeighbours(H, false, true);
  }
  return {};
}

std::size_t LabelInliers(MatchList& list, std::span<const IndexPair> gt) {
  std::vector<IndexPair> sorted(gt.begin(), gt.end());
  std::sort(sorted.begin(), sorted.end());
  list.inlier.assign(list.size(), false);
  std::size_t count = 0;
  for (std::size_t k = 0; k < list.size(); ++k) {
    const IndexPair p{list.matches[k].i3d, list.matches[k].i2d};
    if (std::binary_search(sorted.begin(), sorted.end(), p)) {
      list.inlier[k] = true;
      ++count;
    }
  }
  return count;
}

void WriteWeightDump(const std::filesystem::path& path, const Matrix& W) {
  Checkpoint ckpt;
  ckpt.config = {{"kind", "otmatch/W"}, {"rows", W.rows()}, {"cols", W.cols()}};
  ckpt.tensors.push_back({"otmatch/W", {W.rows(), W.cols()}, W.values(), {}});
  WriteCheckpoint(path, ckpt);
}

Matrix ReadWeightDump(const std::filesystem::path& path) {
  const Checkpoint ckpt = ReadCheckpoint(path);
  for (const auto& t : ckpt.tensors) {
    if (t.name == "otmatch/W" && t.shape.size() == 2) {
      Matrix W(t.shape[0], t.shape[1]);
      W.values() = t.value;
      return W;
    }
  }
  Fail(ErrorKind::kIo, "weight dump lacks otmatch/W");
}

}  // namespace bpnp
