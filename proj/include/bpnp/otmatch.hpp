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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpnp/datagen.hpp"
#include "bpnp/geometry.hpp"
#include "bpnp/matrix.hpp"

namespace bpnp {

// Unary matchability histograms on the simplex.
struct MarginalPriors {
  std::vector<double> r;  // M
  std::vector<double> s;  // N

  static MarginalPriors Uniform(std::size_t M, std::size_t N);
  void Validate() const;
};

// H_ij = |f3d_i - f2d_j|_2.
Matrix CostMatrix(const Matrix& f3d, const Matrix& f2d);

// Accumulates dL/df3d and dL/df2d from dL/dH. Entries with H_ij below 1e-12
// contribute nothing (the norm is not differentiable there).
void CostMatrixBackward(const Matrix& f3d, const Matrix& f2d, const Matrix& H,
                        const Matrix& dH, Matrix& df3d, Matrix& df2d);

enum class SinkhornDomain { kAuto, kLinear, kLog };

struct SinkhornOptions {
  double lambda = 0.1;
  int iters = 20;
  // Stop early once |W 1 - r|_inf <= tol; 0 runs the fixed iteration count.
  double tol = 0.0;
  SinkhornDomain domain = SinkhornDomain::kAuto;
  // Keep every scaling vector for unrolled backpropagation (linear domain).
  bool record = false;
};

struct SinkhornRecording {
  Matrix upsilon;   // exp(-(H - min H) / lambda) / mass
  Matrix unscaled;  // exp(-(H - min H) / lambda)
  double mass = 0.0;
  std::vector<std::vector<double>> a;  // a[t], t = 1..iters (index t-1)
  std::vector<std::vector<double>> b;  // b[0] = ones, b[t] after iteration t
};

struct SinkhornResult {
  Matrix W;
  std::vector<double> a;
  std::vector<double> b;
  int iterations = 0;
  bool log_domain = false;
  std::optional<SinkhornRecording> recording;
};

// Rectangular Sinkhorn scaling of exp(-H / lambda) onto Pi(r, s). Requires
// lambda > 0 and iters >= 1. In kAuto mode the log-domain variant is used
// when the linear kernel underflows; recording is only available in the
// linear domain (kNumericFailure otherwise).
SinkhornResult Sinkhorn(const Matrix& H, const MarginalPriors& priors,
                        const SinkhornOptions& opt);

// Same as Sinkhorn but iters may be 0, in which case W is the globally
// normalised kernel. Always records.
SinkhornResult SinkhornUnrolled(const Matrix& H, const MarginalPriors& priors,
                                double lambda, int iters);

// dL/dH from dL/dW by reverse-mode through every recorded iteration, the
// normalisation and the exponential map.
Matrix SinkhornBackward(const SinkhornResult& result, const Matrix& dW,
                        double lambda);

// sum_ij (1 - 2 C_ij) W_ij. Optional gradient with respect to W.
double JointProbabilityLoss(const Matrix& W, std::span<const IndexPair> gt,
                            Matrix* dW = nullptr);

// sum_ij W_ij * AngularResidual(pose, x_i, y_j); y in normalized frame.
double WeightedReprojectionLoss(const Matrix& W, const PointSet3D& x3d,
                                const PointSet2D& y2d_norm, const Pose& pose,
                                Matrix* dW = nullptr);

// sum_i log(1 + exp(alpha (|f_i - f+|^2 - |f_i - f-|^2))) over anchors with
// a ground-truth positive; the negative is drawn uniformly from the 2D
// points not matched to i. Anchors without a positive (or without any
// negative) are skipped.
double TripletLoss(const Matrix& f3d, const Matrix& f2d, std::span<const IndexPair> gt,
                   double alpha, Rng& rng, Matrix* df3d = nullptr,
                   Matrix* df2d = nullptr);

enum class LossKind { kJointProbability, kReprojection, kTriplet };
const char* LossName(LossKind k);
LossKind ParseLoss(const std::string& name);

struct LossInputs {
  std::span<const IndexPair> gt;
  // Needed by kReprojection only.
  const PointSet3D* x3d = nullptr;
  const PointSet2D* y2d_norm = nullptr;
  const Pose* pose_gt = nullptr;
  double triplet_alpha = 10.0;
};

struct FeatureLossResult {
  double loss = 0.0;
  Matrix df3d;
  Matrix df2d;
  Matrix W;  // empty for the triplet loss
};

// Loss value and its gradient with respect to both feature matrices,
// differentiating through H, exp, normalisation and the unrolled Sinkhorn
// iterations (triplet acts on features directly).
FeatureLossResult LossGradientWrtFeatures(LossKind kind, const Matrix& f3d,
                                          const Matrix& f2d, const LossInputs& in,
                                          double lambda, int iters, Rng& rng);

enum class RetrievalStrategy { kTopKW, kTopKF, kNNW, kNNF, kMNNW, kMNNF };
const char* StrategyName(RetrievalStrategy s);
RetrievalStrategy ParseStrategy(const std::string& name);
inline constexpr RetrievalStrategy kAllStrategies[] = {
    RetrievalStrategy::kTopKW, RetrievalStrategy::kTopKF, RetrievalStrategy::kNNW,
    RetrievalStrategy::kNNF,   RetrievalStrategy::kMNNW,  RetrievalStrategy::kMNNF};

struct Match {
  std::uint32_t i3d = 0;
  std::uint32_t i2d = 0;
  double score = 0.0;
  bool operator==(const Match&) const = default;
};

struct MatchList {
  std::vector<Match> matches;
  std::vector<bool> inlier;  // optional ground-truth flags, parallel to matches

  std::size_t size() const { return matches.size(); }
};

// Top-K strategies sort the flattened matrix (W descending / H ascending,
// ties by lower flat index i*N+j) and truncate at K; throws kInvalidInput when
// K > M*N. NN strategies return one match per 2D point (ordered by j), MNN
// keeps the mutual ones. K is ignored for NN/MNN.
MatchList Retrieve(const Matrix& W, const Matrix& H, RetrievalStrategy strategy,
                   std::size_t K);

// Fills list.inlier from gt and returns the inlier count.
std::size_t LabelInliers(MatchList& list, std::span<const IndexPair> gt);

// Dense W dump in the checkpoint container (tensor "otmatch/W").
void WriteWeightDump(const std::filesystem::path& path, const Matrix& W);
Matrix ReadWeightDump(const std::filesystem::path& path);

}  // namespace bpnp
