#pragma once

// Training loop and per-split evaluation.

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/checkpoint.hpp"
#include "zsyolo/loss.hpp"
#include "zsyolo/metrics.hpp"
#include "zsyolo/model.hpp"
#include "zsyolo/optim.hpp"
#include "zsyolo/prototypes.hpp"
#include "zsyolo/scene.hpp"

namespace zsyolo {

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  std::size_t batch_size = 16;
  std::size_t epochs = 42;
  LrSchedule schedule = LrSchedule::desk();
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  PrototypeMode prototype_mode = PrototypeMode::attributes;
  NoObjectRule noobj_rule = NoObjectRule::cell_overlap;
  double grad_clip = 30.0;  // max global norm of the batch gradient, 0 disables

  void validate() const {
    model.validate();
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (epochs == 0) throw std::invalid_argument("epoch count must be positive");
    if (!(grad_clip >= 0.0)) throw std::invalid_argument("gradient clip norm must be nonnegative");
    if (schedule.total_epochs() != epochs) {
      throw std::invalid_argument("learning-rate schedule spans " + std::to_string(schedule.total_epochs()) +
                                  " epochs but " + std::to_string(epochs) + " were requested");
    }
    OptimizerState{schedule.phases().front().rate, momentum, weight_decay, {}}.validate();
  }
};

inline nlohmann::ordered_json settings_json(const TrainConfig& c) {
  nlohmann::ordered_json o;
  const LossWeights& w = c.weights;
  o["ablation_mode"] = to_string(c.model.ablation);
  o["prototype_mode"] = to_string(c.prototype_mode);
  o["batch_size"] = c.batch_size;
  o["epochs"] = c.epochs;
  nlohmann::ordered_json phases = nlohmann::ordered_json::array();
  for (const LrPhase& p : c.schedule.phases()) phases.push_back({p.epochs, p.rate});
  o["lr_schedule"] = std::move(phases);
  o["momentum"] = c.momentum;
  o["weight_decay"] = c.weight_decay;
  o["grad_clip"] = c.grad_clip;
  o["seed"] = c.seed;
  o["weights"] = {{"lambda_obj", w.lambda_obj},   {"lambda_noobj", w.lambda_noobj}, {"lambda_loc", w.lambda_loc},
                  {"lambda_attr", w.lambda_attr}, {"lambda_conf", w.lambda_conf}};
  return o;
}

/// Non-finite loss or parameters during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : std::runtime_error("training diverged in epoch " + std::to_string(epoch + 1) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

struct EpochLog {
  std::size_t epoch = 0;  // zero-based
  double learning_rate = 0.0;
  LossBreakdown loss;  // mean per image over the epoch
};

struct TrainResult {
  Model model;  // parameters at the epoch with the lowest mean total loss
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
  CheckpointMeta meta;
};

inline bool finite(const LossBreakdown& b) {
  return std::isfinite(b.loc) && std::isfinite(b.attr) && std::isfinite(b.conf) && std::isfinite(b.total);
}

/// Anchor priors from k-means over training boxes in grid units.
inline std::vector<Anchor> fit_priors(const std::vector<Scene>& train, const GridSpec& grid, std::uint64_t seed) {
  std::vector<Box> boxes;
  for (const Scene& s : train)
    for (const GroundTruth& g : objects_in_grid(s, grid)) boxes.push_back(g.box);
  return fit_anchor_priors(boxes, grid.A, seed);
}

/// Minibatch SGD on the mean-per-image objective. Scenes must carry images;
/// prototypes must cover every training class. `on_epoch` sees each log.
inline TrainResult train(const TrainConfig& cfg, const std::vector<Scene>& scenes, const PrototypeTable& protos,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("no training scenes");
  if (protos.dim() != cfg.model.h) {
    throw std::invalid_argument("prototype dimension " + std::to_string(protos.dim()) + " does not match h=" +
                                std::to_string(cfg.model.h));
  }
  std::vector<std::vector<GroundTruth>> targets;
  for (const Scene& s : scenes) {
    if (s.image.size() == 0) throw std::invalid_argument("scene " + std::to_string(s.id) + " has no image loaded");
    auto gts = objects_in_grid(s, cfg.model.grid);
    for (GroundTruth& g : gts) {
      if (!protos.contains(g.class_id)) throw std::invalid_argument("no prototype for class " + std::to_string(g.class_id));
      g.attributes = protos.at(g.class_id).vector;
    }
    targets.push_back(std::move(gts));
  }
  const LossWeights& w = cfg.weights;
  Model model(cfg.model);
  const auto params = model.parameters();
  OptimizerState opt{cfg.schedule.rate_at(0), cfg.momentum, cfg.weight_decay, {}};

  TrainResult result{model, 0, {}, {}};
  result.meta.settings = settings_json(cfg);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    opt.learning_rate = cfg.schedule.rate_at(e);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, e));
    rng.shuffle(order.begin(), order.end());
    LossBreakdown sum;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        model.zero_grad();
        for (std::size_t j = start; j < end; ++j) {
          const std::size_t i = order[j];
          Graph g;
          LossGraph lg = build_loss(g, model, scenes[i].image, targets[i], protos, w, cfg.noobj_rule);
          if (!finite(lg.breakdown)) throw DivergenceError(e, "non-finite loss on scene " + std::to_string(scenes[i].id));
          g.backward(lg.total);
          sum.loc += lg.breakdown.loc;
          sum.attr += lg.breakdown.attr;
          sum.conf += lg.breakdown.conf;
          sum.total += lg.breakdown.total;
        }
        double scale = 1.0 / static_cast<double>(end - start);
        double sq = 0.0;
        for (Tensor* p : params)
          for (double v : p->grad()) sq += v * v;
        const double norm = std::sqrt(sq) * scale;
        if (!std::isfinite(norm)) throw DivergenceError(e, "non-finite gradient");
        if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) scale *= cfg.grad_clip / norm;
        for (Tensor* p : params)
          for (double& v : p->grad()) v *= scale;
        sgd_step(params, opt);
      }
    } catch (const NumericError& err) {
      throw DivergenceError(e, err.what());
    }
    const double n = static_cast<double>(scenes.size());
    const EpochLog log{e, opt.learning_rate, {sum.loc / n, sum.attr / n, sum.conf / n, sum.total / n}};
    result.log.push_back(log);
    result.meta.history.push_back(log.loss);
    if (on_epoch) on_epoch(log);
    if (log.loss.total < best) {
      best = log.loss.total;
      result.model = model;
      result.best_epoch = e;
    }
  }
  result.meta.epoch = result.best_epoch + 1;
  round_to_checkpoint_precision(result.model);
  return result;
}

inline std::string loss_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,loc,attr,conf,total\n";
  char buf[160];
  for (const EpochLog& l : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10f,%.10f,%.10f,%.10f\n", l.epoch + 1, l.learning_rate, l.loss.loc,
                  l.loss.attr, l.loss.conf, l.loss.total);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  ExtractOptions extract;
  double iou_thresh = 0.5;
  bool conventional_f1 = false;
  bool recognize = false;
  bool oracle_gt = false;  // score ground-truth boxes at confidence 1
};

struct SplitEval {
  std::string name;
  EvalReport report;
  std::optional<RecognitionReport> recognition;
};

/// Detections for one scene, in grid units.
inline std::vector<Detection> detect(const Model& model, const Tensor& image, const ExtractOptions& opt) {
  Graph g;
  const HeadOutputs out = model.forward(g, image);
  return extract_detections(out, model.grid(), model.config().h, opt);
}

inline SplitEval evaluate_split(const std::string& name, const Model& model, const std::vector<Scene>& scenes,
                                const PrototypeTable& protos, Restrict restrict, const EvalOptions& opt) {
  MatchSet matches;
  std::vector<LabelledImage> labelled;
  for (const Scene& s : scenes) {
    const auto gts = objects_in_grid(s, model.grid());
    std::vector<Detection> dets;
    if (opt.oracle_gt) {
      for (const GroundTruth& g : gts) dets.push_back({g.box, 1.0, protos.at(g.class_id).vector, std::nullopt});
    } else {
      dets = detect(model, s.image, opt.extract);
    }
    std::vector<Box> boxes;
    for (const GroundTruth& g : gts) boxes.push_back(g.box);
    matches.add(dets, boxes, opt.iou_thresh);
    if (opt.recognize) {
      for (Detection& d : dets) d.predicted_class = nn_classify(d.semantic, protos, restrict).class_id;
      labelled.push_back({std::move(dets), gts});
    }
  }
  SplitEval out{name, curves(matches, opt.conventional_f1), std::nullopt};
  if (opt.recognize) out.recognition = recognition_report(labelled, protos, opt.iou_thresh);
  return out;
}

/// test_seen, test_unseen and test_mix, in that order.
inline std::vector<SplitEval> evaluate_all(const Model& model, const SplitSet& data, const PrototypeTable& protos,
                                           const EvalOptions& opt) {
  std::vector<SplitEval> out;
  out.push_back(evaluate_split("test_seen", model, data.test_seen, protos, Restrict::seen, opt));
  out.push_back(evaluate_split("test_unseen", model, data.test_unseen, protos, Restrict::unseen, opt));
  out.push_back(evaluate_split("test_mix", model, data.test_mix, protos, Restrict::all, opt));
  return out;
}

}  // namespace zsyolo
