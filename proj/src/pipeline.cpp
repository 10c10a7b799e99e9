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

#include "bpnp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "bpnp/error.hpp"

namespace bpnp {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

AdamOptions AdamFromJson(const nlohmann::json& j, AdamOptions a) {
  a.lr = j.value("lr", a.lr);
  a.beta1 = j.value("beta1", a.beta1);
  a.beta2 = j.value("beta2", a.beta2);
  a.eps = j.value("eps", a.eps);
  return a;
}

}  // namespace

void PipelineConfig::Validate() const {
  Require(matcher.lambda > 0.0, ErrorKind::kConfiguration, "matcher.lambda must be > 0");
  Require(matcher.iters >= 0, ErrorKind::kConfiguration, "matcher.iters must be >= 0");
  Require(matcher.top_k >= 1, ErrorKind::kConfiguration, "matcher.top_k must be >= 1");
  Require(refiner_top_k >= 6, ErrorKind::kConfiguration, "refiner_top_k must be >= 6");
  Require(stage1.batch >= 1 && stage1.max_epochs >= 0 && stage1.adam.lr > 0.0,
          ErrorKind::kConfiguration, "invalid stage1 settings");
  Require(stage1.convergence_window >= 1 && stage1.convergence_tol >= 0.0,
          ErrorKind::kConfiguration, "invalid convergence settings");
  refiner.Validate();
  ransac.Validate();
}

nlohmann::json PipelineConfig::ToJson() const {
  nlohmann::json j;
  j["featnet"] = featnet.ToJson();
  j["matcher"] = {{"lambda", matcher.lambda}, {"iters", matcher.iters}, {"top_k", matcher.top_k}};
  j["refiner"] = refiner.ToJson();
  j["ransac"] = ransac.ToJson();
  j["loss"] = LossName(loss);
  j["stage1"] = {{"max_epochs", stage1.max_epochs},
                 {"batch", stage1.batch},
                 {"lr", stage1.adam.lr},
                 {"beta1", stage1.adam.beta1},
                 {"beta2", stage1.adam.beta2},
                 {"eps", stage1.adam.eps},
                 {"seed", stage1.seed},
                 {"convergence_window", stage1.convergence_window},
                 {"convergence_tol", stage1.convergence_tol},
                 {"triplet_alpha", stage1.triplet_alpha},
                 {"val_top_k", stage1.val_top_k}};
  j["stage2"] = stage2.ToJson();
  j["refiner_top_k"] = refiner_top_k;
  j["use_refiner"] = use_refiner;
  return j;
}

PipelineConfig PipelineConfig::FromJson(const nlohmann::json& j) {
  Require(j.is_object(), ErrorKind::kConfiguration, "pipeline config must be an object");
  PipelineConfig c;
  try {
    if (j.contains("featnet")) c.featnet = FeatureNetConfig::FromJson(j["featnet"]);
    if (j.contains("matcher")) {
      const auto& m = j["matcher"];
      c.matcher.lambda = m.value("lambda", c.matcher.lambda);
      c.matcher.iters = m.value("iters", c.matcher.iters);
      c.matcher.top_k = m.value("top_k", c.matcher.top_k);
    }
    if (j.contains("refiner")) c.refiner = RefinerConfig::FromJson(j["refiner"]);
    if (j.contains("ransac")) c.ransac = RansacConfig::FromJson(j["ransac"]);
    if (j.contains("loss")) c.loss = ParseLoss(j["loss"].get<std::string>());
    if (j.contains("stage1")) {
      const auto& s = j["stage1"];
      c.stage1.max_epochs = s.value("max_epochs", c.stage1.max_epochs);
      c.stage1.batch = s.value("batch", c.stage1.batch);
      c.stage1.adam = AdamFromJson(s, c.stage1.adam);
      c.stage1.seed = s.value("seed", c.stage1.seed);
      c.stage1.convergence_window = s.value("convergence_window", c.stage1.convergence_window);
      c.stage1.convergence_tol = s.value("convergence_tol", c.stage1.convergence_tol);
      c.stage1.triplet_alpha = s.value("triplet_alpha", c.stage1.triplet_alpha);
      c.stage1.val_top_k = s.value("val_top_k", c.stage1.val_top_k);
    }
    if (j.contains("stage2")) c.stage2 = RefinerTrainConfig::FromJson(j["stage2"]);
    c.refiner_top_k = j.value("refiner_top_k", c.refiner_top_k);
    c.use_refiner = j.value("use_refiner", c.use_refiner);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("bad pipeline config: ") + e.what());
  }
  c.Validate();
  return c;
}

Pipeline::Pipeline(const PipelineConfig& cfg)
    : cfg_(cfg), featnet_(cfg.featnet), refiner_(cfg.refiner) {
  cfg_.Validate();
}

void Pipeline::Save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.config = {{"schema", "bpnp-pipeline/1"}, {"stage", stage_}, {"pipeline", cfg_.ToJson()}};
  AppendTensors(featnet_.params(), ckpt);
  AppendTensors(refiner_.params(), ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  WriteCheckpoint(tmp, ckpt);
  std::filesystem::rename(tmp, path);
}

Pipeline Pipeline::Load(const std::filesystem::path& path) {
  const Checkpoint ckpt = ReadCheckpoint(path);
  Require(ckpt.config.value("schema", "") == "bpnp-pipeline/1", ErrorKind::kConfiguration,
          "checkpoint is not a pipeline checkpoint: " + path.string());
  Pipeline p(PipelineConfig::FromJson(ckpt.config.at("pipeline")));
  LoadTensors(ckpt, p.featnet_.params());
  LoadTensors(ckpt, p.refiner_.params());
  p.stage_ = ckpt.config.value("stage", 0);
  return p;
}

MatchScores ScoresFromFeatures(Matrix f3d, Matrix f2d, const MatcherConfig& m) {
  MatchScores s;
  s.f3d = std::move(f3d);
  s.f2d = std::move(f2d);
  s.H = CostMatrix(s.f3d, s.f2d);
  const auto priors = MarginalPriors::Uniform(s.H.rows(), s.H.cols());
  if (m.iters == 0) {
    s.W = SinkhornUnrolled(s.H, priors, m.lambda, 0).W;
  } else {
    SinkhornOptions opt;
    opt.lambda = m.lambda;
    opt.iters = m.iters;
    s.W = Sinkhorn(s.H, priors, opt).W;
  }
  return s;
}

MatchScores ComputeScores(const FeatureNet& net, const MatcherConfig& m,
                          const SceneSample& scene) {
  Matrix f3d = net.Forward(Stream::k3D, ToMatrix(scene.x3d.points));
  Matrix f2d = net.Forward(Stream::k2D, ToMatrix(scene.normalized2d().points));
  return ScoresFromFeatures(std::move(f3d), std::move(f2d), m);
}

InferResult InferFromScores(const PipelineConfig& cfg, const Refiner* refiner,
                            const SceneSample& scene, const MatchScores& scores,
                            const InferOptions& opt) {
  InferResult out;
  const PointSet2D yn = scene.normalized2d();
  const std::size_t K = std::min(opt.top_k.value_or(cfg.matcher.top_k), scores.W.size());
  auto t0 = Clock::now();
  out.candidates = Retrieve(scores.W, scores.H, RetrievalStrategy::kTopKW, K);
  LabelInliers(out.candidates, scene.gt_matches);
  out.filtered = out.candidates;
  auto t1 = Clock::now();
  out.seconds_matching = Seconds(t0, t1);
  if (opt.use_refiner && refiner != nullptr && out.candidates.size() >= 2) {
    const Matrix feats = MatchFeatures(out.candidates.matches, scene.x3d, yn,
                                       refiner->config().use_match_weight ? &scores.W : nullptr);
    out.weights = refiner->Classify(feats);
    MatchList kept;
    for (std::size_t k = 0; k < out.candidates.size(); ++k) {
      if (out.weights[k] > 0.0) {
        kept.matches.push_back(out.candidates.matches[k]);
        kept.inlier.push_back(out.candidates.inlier[k]);
      }
    }
    if (kept.size() >= 4) {
      out.filtered = std::move(kept);
    } else {
      out.fallback = true;
    }
  }
  auto t2 = Clock::now();
  out.seconds_refine = Seconds(t1, t2);
  if (out.filtered.size() >= 4) {
    out.estimate = RansacP3P(out.filtered.matches, scene.x3d, yn, cfg.ransac);
  }
  out.seconds_pose = Seconds(t2, Clock::now());
  return out;
}

InferResult Infer(const Pipeline& pipe, const SceneSample& scene, const InferOptions& opt) {
  auto t0 = Clock::now();
  MatchScores s = ComputeScores(pipe.featnet(), pipe.config().matcher, scene);
  const double feat = Seconds(t0, Clock::now());
  InferResult r = InferFromScores(pipe.config(), &pipe.refiner(), scene, s, opt);
  r.seconds_features = feat;
  return r;
}

double Stage1SampleLoss(FeatureNet& net, const PipelineConfig& cfg, const SceneSample& scene,
                        Rng& rng, bool accumulate) {
  const PointSet2D yn = scene.normalized2d();
  FeatureNet::Cache c3, c2;
  const Matrix f3d = net.Forward(Stream::k3D, ToMatrix(scene.x3d.points), &c3);
  const Matrix f2d = net.Forward(Stream::k2D, ToMatrix(yn.points), &c2);
  LossInputs in;
  in.gt = scene.gt_matches;
  in.x3d = &scene.x3d;
  in.y2d_norm = &yn;
  in.pose_gt = &scene.pose_gt;
  in.triplet_alpha = cfg.stage1.triplet_alpha;
  const FeatureLossResult r =
      LossGradientWrtFeatures(cfg.loss, f3d, f2d, in, cfg.matcher.lambda, cfg.matcher.iters, rng);
  if (!std::isfinite(r.loss)) throw NumericError(-1, "stage-1 loss is not finite");
  if (accumulate) {
    net.Backward(Stream::k3D, c3, r.df3d);
    net.Backward(Stream::k2D, c2, r.df2d);
  }
  return r.loss;
}

double MeanTopKInliers(const FeatureNet& net, const MatcherConfig& m,
                       std::span<const SceneSample> scenes, std::size_t K,
                       RetrievalStrategy strategy) {
  if (scenes.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : scenes) {
    const MatchScores sc = ComputeScores(net, m, s);
    MatchList list = Retrieve(sc.W, sc.H, strategy, std::min(K, sc.W.size()));
    total += static_cast<double>(LabelInliers(list, s.gt_matches));
  }
  return total / static_cast<double>(scenes.size());
}

namespace {

void EmitLog(const TrainHooks& hooks, const nlohmann::json& rec) {
  if (hooks.log != nullptr) {
    *hooks.log << rec.dump() << '\n';
    hooks.log->flush();
  }
}

}  // namespace

std::vector<Stage1Epoch> TrainStage1(Pipeline& pipe, std::span<const SceneSample> train,
                                     std::span<const SceneSample> val, const TrainHooks& hooks) {
  Require(!train.empty(), ErrorKind::kInvalidInput, "stage-1 training set is empty");
  const PipelineConfig& cfg = pipe.config();
  FeatureNet& net = pipe.featnet();
  std::vector<Stage1Epoch> log;

  auto evaluate = [&](Stage1Epoch& e) {
    e.val_inliers = MeanTopKInliers(net, cfg.matcher, val, cfg.stage1.val_top_k,
                                    RetrievalStrategy::kTopKW);
    e.val_inliers_f = MeanTopKInliers(net, cfg.matcher, val, cfg.stage1.val_top_k,
                                      RetrievalStrategy::kTopKF);
  };
  auto record = [&](const Stage1Epoch& e) {
    log.push_back(e);
    EmitLog(hooks, {{"stage", 1},
                    {"epoch", e.epoch},
                    {"loss", e.loss},
                    {"val_topk_w_inliers", e.val_inliers},
                    {"val_topk_f_inliers", e.val_inliers_f},
                    {"converged", e.converged},
                    {"convergence_rule",
                     "relative improvement < " + std::to_string(cfg.stage1.convergence_tol) +
                         " over " + std::to_string(cfg.stage1.convergence_window) + " epochs"}});
    if (hooks.on_epoch) hooks.on_epoch(e);
  };

  {
    Stage1Epoch e0;
    Rng rng(cfg.stage1.seed);
    double total = 0.0;
    for (const auto& s : train) total += Stage1SampleLoss(net, cfg, s, rng, false);
    e0.loss = total / static_cast<double>(train.size());
    evaluate(e0);
    record(e0);
  }

  AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.stage1.max_epochs; ++epoch) {
    Rng rng(cfg.stage1.seed + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.stage1.batch) {
      net.params().ZeroGrad();
      const std::size_t stop = std::min(order.size(), start + cfg.stage1.batch);
      for (std::size_t b = start; b < stop; ++b) {
        total += Stage1SampleLoss(net, cfg, train[order[b]], rng, true);
      }
      AdamStep(net.params(), adam, cfg.stage1.adam);
    }
    net.params().CheckFinite();
    Stage1Epoch e;
    e.epoch = epoch;
    e.loss = total / static_cast<double>(train.size());
    evaluate(e);
    const int w = cfg.stage1.convergence_window;
    if (static_cast<int>(log.size()) > w) {
      // log[k] holds epoch k; epoch 0 is the untrained model.
      const double ref = log[log.size() - static_cast<std::size_t>(w)].loss;
      const double rel = (ref - e.loss) / std::max(std::abs(ref), 1e-300);
      e.converged = rel < cfg.stage1.convergence_tol;
    }
    pipe.set_stage(std::max(pipe.stage(), 1));
    if (!hooks.checkpoint.empty()) pipe.Save(hooks.checkpoint);
    record(e);
    if (e.converged) break;
  }
  pipe.set_stage(std::max(pipe.stage(), 1));
  return log;
}

RefinerSample BuildRefinerSample(const Pipeline& pipe, const SceneSample& scene) {
  const PipelineConfig& cfg = pipe.config();
  const MatchScores sc = ComputeScores(pipe.featnet(), cfg.matcher, scene);
  MatchList list = Retrieve(sc.W, sc.H, RetrievalStrategy::kTopKW,
                            std::min(cfg.refiner_top_k, sc.W.size()));
  LabelInliers(list, scene.gt_matches);
  const PointSet2D yn = scene.normalized2d();
  const Matrix feats = MatchFeatures(list.matches, scene.x3d, yn,
                                     cfg.refiner.use_match_weight ? &sc.W : nullptr);
  std::vector<std::size_t> order(list.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = feats.row(a), rb = feats.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  RefinerSample s;
  s.features = PermuteRows(feats, order);
  s.pose_gt = scene.pose_gt;
  for (std::size_t k : order) {
    s.x.push_back(scene.x3d.points[list.matches[k].i3d]);
    s.y.push_back(yn.points[list.matches[k].i2d]);
    s.inlier.push_back(list.inlier[k]);
  }
  return s;
}

std::vector<RefinerEpoch> TrainStage2(Pipeline& pipe, std::span<const SceneSample> train,
                                      std::span<const SceneSample> val, const TrainHooks& hooks) {
  std::vector<RefinerSample> tr, va;
  tr.reserve(train.size());
  for (const auto& s : train) tr.push_back(BuildRefinerSample(pipe, s));
  for (const auto& s : val) va.push_back(BuildRefinerSample(pipe, s));
  auto on_epoch = [&](const RefinerEpoch& e) {
    EmitLog(hooks, {{"stage", 2},
                    {"epoch", e.epoch},
                    {"loss", e.train_loss},
                    {"val_pose_loss", e.val_loss},
                    {"skipped", e.skipped},
                    {"val_inlier_ratio_before", e.val_inlier_ratio_before},
                    {"val_inlier_ratio_after", e.val_inlier_ratio_after}});
    if (e.epoch > 0) {
      pipe.set_stage(2);
      if (!hooks.checkpoint.empty()) pipe.Save(hooks.checkpoint);
    }
  };
  auto log = TrainRefiner(pipe.refiner(), tr, va, pipe.config().stage2, on_epoch);
  pipe.set_stage(2);
  return log;
}

}  // namespace bpnp
