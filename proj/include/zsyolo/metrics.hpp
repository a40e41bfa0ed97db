#pragma once

// Class-agnostic detection metrics: greedy IoU matching, precision/recall,
// 11-point interpolated AP and the average F-score over 101 confidence
// thresholds, plus class-aware per-class AP for semantic recognition.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/box.hpp"
#include "zsyolo/model.hpp"
#include "zsyolo/semantics.hpp"

namespace zsyolo {

struct Detection {
  Box box;
  double confidence = 0.0;
  std::vector<double> semantic;
  std::optional<ClassId> predicted_class;
};

inline constexpr std::size_t kRecallLevels = 11;
inline constexpr std::size_t kThresholds = 101;
inline double recall_level(std::size_t i) { return static_cast<double>(i) / 10.0; }
inline double threshold_at(std::size_t i) { return static_cast<double>(i) / 100.0; }

/// Detection order used everywhere: confidence descending, ties by index.
inline std::vector<std::size_t> confidence_order(std::span<const double> conf) {
  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  return order;
}

/// TP flags aligned with `dets`. Each detection, in confidence order, is a TP
/// iff its best-IoU still-unmatched ground truth has IoU >= iou_thresh.
inline std::vector<bool> match_detections(std::span<const Detection> dets, std::span<const Box> gts,
                                          double iou_thresh = 0.5) {
  std::vector<double> conf;
  for (const Detection& d : dets) conf.push_back(d.confidence);
  std::vector<bool> tp(dets.size(), false), used(gts.size(), false);
  for (std::size_t i : confidence_order(conf)) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(dets[i].box, gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best && best_iou >= iou_thresh) {
      used[*best] = true;
      tp[i] = true;
    }
  }
  return tp;
}

/// Matched detections pooled over images.
struct MatchSet {
  std::vector<double> confidence;
  std::vector<bool> tp;
  std::size_t n_gt = 0;

  void add(std::span<const Detection> dets, std::span<const Box> gts, double iou_thresh = 0.5) {
    const auto flags = match_detections(dets, gts, iou_thresh);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      confidence.push_back(dets[i].confidence);
      tp.push_back(flags[i]);
    }
    n_gt += gts.size();
  }
  std::size_t size() const { return confidence.size(); }
};

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t pred = 0;
};

inline PrecisionRecall make_pr(std::size_t tp, std::size_t pred, std::size_t n_gt) {
  PrecisionRecall r;
  r.tp = tp;
  r.pred = pred;
  r.precision = pred == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(pred);
  r.recall = n_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_gt);
  return r;
}

/// Precision and recall over detections with confidence >= conf_thresh.
inline PrecisionRecall precision_recall(const MatchSet& m, double conf_thresh) {
  std::size_t tp = 0, pred = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.confidence[i] < conf_thresh) continue;
    ++pred;
    tp += m.tp[i] ? 1 : 0;
  }
  return make_pr(tp, pred, m.n_gt);
}

/// Mean over recall levels 0, 0.1, ..., 1 of the best precision among
/// operating points with at least that recall (0 when none reaches it).
/// Operating points are confidence cut-offs, i.e. the ends of runs of equal
/// confidence in the sorted list; the empty cut-off is not one.
inline double average_precision_11pt(const MatchSet& m) {
  const auto order = confidence_order(m.confidence);
  std::vector<PrecisionRecall> points;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    tp += m.tp[order[k]] ? 1 : 0;
    const bool run_end = k + 1 == order.size() || m.confidence[order[k + 1]] != m.confidence[order[k]];
    if (run_end) points.push_back(make_pr(tp, k + 1, m.n_gt));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < kRecallLevels; ++i) {
    const double r = recall_level(i);
    double best = 0.0;
    for (const PrecisionRecall& p : points)
      if (p.recall >= r) best = std::max(best, p.precision);
    sum += best;
  }
  return sum / static_cast<double>(kRecallLevels);
}

/// Per-threshold F term. By default Prec*Rec/(Prec+Rec), half of the usual
/// F1; `conventional` doubles it.
inline double fscore_term(const PrecisionRecall& pr, bool conventional = false) {
  const double s = pr.precision + pr.recall;
  if (s == 0.0) return 0.0;
  return (conventional ? 2.0 : 1.0) * pr.precision * pr.recall / s;
}

inline double average_fscore(const MatchSet& m, bool conventional = false) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kThresholds; ++i) sum += fscore_term(precision_recall(m, threshold_at(i)), conventional);
  return sum / static_cast<double>(kThresholds);
}

struct ThresholdRow {
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t pred = 0;
  std::size_t gt = 0;
  double precision = 1.0;
  double recall = 0.0;
  double fscore = 0.0;
};

struct EvalReport {
  double ap = 0.0;
  double avg_fscore = 0.0;
  std::vector<ThresholdRow> rows;  // one per threshold 0, 0.01, ..., 1
};

inline EvalReport curves(const MatchSet& m, bool conventional_f1 = false) {
  EvalReport r;
  r.ap = average_precision_11pt(m);
  double fsum = 0.0;
  for (std::size_t i = 0; i < kThresholds; ++i) {
    const double t = threshold_at(i);
    const PrecisionRecall pr = precision_recall(m, t);
    const double f = fscore_term(pr, conventional_f1);
    fsum += f;
    r.rows.push_back({t, pr.tp, pr.pred, m.n_gt, pr.precision, pr.recall, f});
  }
  r.avg_fscore = fsum / static_cast<double>(kThresholds);
  return r;
}

/// Recall at a confidence threshold read off the report grid.
inline double recall_at(const EvalReport& r, double threshold) {
  for (const ThresholdRow& row : r.rows)
    if (std::abs(row.threshold - threshold) < 1e-9) return row.recall;
  throw std::invalid_argument("threshold " + std::to_string(threshold) + " is not on the evaluation grid");
}

namespace detail {
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}
}  // namespace detail

/// threshold,tp,pred,gt,precision,recall,fscore rows, then an ap,avg_fscore
/// header and its values.
inline std::string metrics_csv(const EvalReport& r) {
  std::string out = "threshold,tp,pred,gt,precision,recall,fscore\n";
  for (const ThresholdRow& row : r.rows) {
    out += detail::fmt(row.threshold).substr(0, 4) + "," + std::to_string(row.tp) + "," + std::to_string(row.pred) + "," +
           std::to_string(row.gt) + "," + detail::fmt(row.precision) + "," + detail::fmt(row.recall) + "," +
           detail::fmt(row.fscore) + "\n";
  }
  out += "ap,avg_fscore\n" + detail::fmt(r.ap) + "," + detail::fmt(r.avg_fscore) + "\n";
  return out;
}

inline std::string curve_csv(const EvalReport& r) {
  std::string out = "recall,precision\n";
  for (const ThresholdRow& row : r.rows) out += detail::fmt(row.recall) + "," + detail::fmt(row.precision) + "\n";
  return out;
}

/// confidence,recall pairs over the threshold grid.
inline std::string recall_curve_csv(const EvalReport& r) {
  std::string out = "confidence,recall\n";
  for (const ThresholdRow& row : r.rows) out += detail::fmt(row.threshold).substr(0, 4) + "," + detail::fmt(row.recall) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Recognition

struct ClassAp {
  ClassId id = 0;
  std::string name;
  bool seen = true;
  std::size_t n_gt = 0;
  double ap = 0.0;
};

struct RecognitionReport {
  std::vector<ClassAp> classes;  // classes with at least one ground truth
  double mean_seen = 0.0;        // 0 when no seen class is present
  double mean_unseen = 0.0;
  std::size_t seen_classes = 0;
  std::size_t unseen_classes = 0;
};

/// One image's detections and labelled ground truths.
struct LabelledImage {
  std::vector<Detection> detections;
  std::vector<GroundTruth> truths;
};

/// Per-class AP where a TP must match a ground truth of its predicted class.
inline RecognitionReport recognition_report(std::span<const LabelledImage> images, const PrototypeTable& table,
                                            double iou_thresh = 0.5) {
  std::map<ClassId, MatchSet> per_class;
  for (const ClassPrototype& c : table.classes()) per_class[c.id];
  for (const LabelledImage& img : images) {
    for (const Detection& d : img.detections) {
      if (!d.predicted_class) throw std::invalid_argument("recognition_report: detection without a predicted class");
      if (!table.contains(*d.predicted_class)) {
        throw std::invalid_argument("recognition_report: unknown class id " + std::to_string(*d.predicted_class));
      }
    }
    for (const GroundTruth& g : img.truths) {
      if (!table.contains(g.class_id)) {
        throw std::invalid_argument("recognition_report: unknown class id " + std::to_string(g.class_id));
      }
    }
    for (auto& [id, ms] : per_class) {
      std::vector<Detection> dets;
      std::vector<Box> gts;
      for (const Detection& d : img.detections)
        if (*d.predicted_class == id) dets.push_back(d);
      for (const GroundTruth& g : img.truths)
        if (g.class_id == id) gts.push_back(g.box);
      ms.add(dets, gts, iou_thresh);
    }
  }
  RecognitionReport out;
  double seen_sum = 0.0, unseen_sum = 0.0;
  std::size_t n_seen = 0, n_unseen = 0;
  for (const ClassPrototype& c : table.classes()) {
    const MatchSet& ms = per_class[c.id];
    if (ms.n_gt == 0) continue;
    const double ap = average_precision_11pt(ms);
    out.classes.push_back({c.id, c.name, c.seen, ms.n_gt, ap});
    (c.seen ? seen_sum : unseen_sum) += ap;
    ++(c.seen ? n_seen : n_unseen);
  }
  out.seen_classes = n_seen;
  out.unseen_classes = n_unseen;
  out.mean_seen = n_seen ? seen_sum / static_cast<double>(n_seen) : 0.0;
  out.mean_unseen = n_unseen ? unseen_sum / static_cast<double>(n_unseen) : 0.0;
  return out;
}

inline std::string recognition_csv(const RecognitionReport& r) {
  std::string out = "class_id,name,seen,gt,ap\n";
  for (const ClassAp& c : r.classes) {
    out += std::to_string(c.id) + "," + c.name + "," + (c.seen ? "1" : "0") + "," + std::to_string(c.n_gt) + "," +
           detail::fmt(c.ap) + "\n";
  }
  out += "mean_seen,mean_unseen\n" + detail::fmt(r.mean_seen) + "," + detail::fmt(r.mean_unseen) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Decoding network outputs

/// Greedy suppression in confidence order: a detection is dropped when its
/// IoU with an already kept one exceeds nms_iou. Returns kept indices.
inline std::vector<std::size_t> greedy_nms(std::span<const Detection> dets, double nms_iou) {
  std::vector<double> conf;
  for (const Detection& d : dets) conf.push_back(d.confidence);
  std::vector<std::size_t> kept;
  for (std::size_t i : confidence_order(conf)) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (iou(dets[i].box, dets[k].box) > nms_iou) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

struct ExtractOptions {
  double conf_floor = 0.0;
  double nms_iou = 0.45;
  bool nms = true;
};

/// All S*S*A predictions decoded, squashed, floored and suppressed; boxes
/// in grid units, ordered by confidence.
inline std::vector<Detection> extract_detections(const Tensor& tl, const Tensor& ts, const Tensor& tc,
                                                 const GridSpec& grid, std::size_t h, const ExtractOptions& opt = {}) {
  std::vector<Detection> all;
  for (std::size_t cy = 0; cy < grid.S; ++cy)
    for (std::size_t cx = 0; cx < grid.S; ++cx)
      for (std::size_t a = 0; a < grid.A; ++a) {
        const double p = sigmoid(tc.at(a, cy, cx));
        if (p < opt.conf_floor) continue;
        all.push_back({decode_box(offsets_at(tl, cx, cy, a), {cx, cy}, grid.priors[a]), p,
                       semantic_at(ts, h, cx, cy, a), std::nullopt});
      }
  std::vector<std::size_t> keep;
  if (opt.nms) {
    keep = greedy_nms(all, opt.nms_iou);
  } else {
    std::vector<double> conf;
    for (const Detection& d : all) conf.push_back(d.confidence);
    keep = confidence_order(conf);
  }
  std::vector<Detection> out;
  for (std::size_t i : keep) out.push_back(std::move(all[i]));
  return out;
}

inline std::vector<Detection> extract_detections(const HeadOutputs& out, const GridSpec& grid, std::size_t h,
                                                 const ExtractOptions& opt = {}) {
  return extract_detections(out.offsets.value(), out.semantics.value(), out.confidence.value(), grid, h, opt);
}

}  // namespace zsyolo
