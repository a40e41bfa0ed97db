#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/rng.hpp"

namespace zsyolo {

using ClassId = int;

/// Center-format box. Inside the detector everything is in grid units.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double left() const { return x - 0.5 * w; }
  double right() const { return x + 0.5 * w; }
  double top() const { return y - 0.5 * h; }
  double bottom() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// One annotated object: box, class and its semantic vector.
struct GroundTruth {
  Box box;
  ClassId class_id = 0;
  std::vector<double> attributes;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Raw localization outputs for one anchor.
struct Offsets {
  double ox = 0.0;
  double oy = 0.0;
  double ow = 0.0;
  double oh = 0.0;
};

struct Cell {
  std::size_t cx = 0;
  std::size_t cy = 0;
};

/// Anchor prior extents in grid units.
struct Anchor {
  double pw = 1.0;
  double ph = 1.0;
  friend bool operator==(const Anchor&, const Anchor&) = default;
};

struct GridSpec {
  std::size_t S = 7;
  std::size_t A = 3;
  std::vector<Anchor> priors;
  std::size_t image_size = 112;

  void validate() const {
    if (S < 1) throw std::invalid_argument("grid side S must be at least 1");
    if (A < 1) throw std::invalid_argument("anchors per cell A must be at least 1");
    if (priors.size() != A) {
      throw std::invalid_argument("grid has A=" + std::to_string(A) + " but " + std::to_string(priors.size()) +
                                  " anchor priors");
    }
    for (const Anchor& p : priors)
      if (!(p.pw > 0.0 && p.ph > 0.0)) throw std::invalid_argument("anchor priors must be strictly positive");
    if (image_size < S) throw std::invalid_argument("image_size must be at least S");
  }

  std::size_t predictions() const { return S * S * A; }
  double pixels_per_cell() const { return static_cast<double>(image_size) / static_cast<double>(S); }

  /// Flat prediction index of anchor `a` in cell (cx, cy).
  std::size_t index(std::size_t cx, std::size_t cy, std::size_t a) const { return (cy * S + cx) * A + a; }
};

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline Box decode_box(const Offsets& o, Cell cell, Anchor anchor) {
  return {sigmoid(o.ox) + static_cast<double>(cell.cx), sigmoid(o.oy) + static_cast<double>(cell.cy),
          anchor.pw * std::exp(o.ow), anchor.ph * std::exp(o.oh)};
}

/// Inverse of decode_box. The box center must lie strictly inside the cell.
inline Offsets encode_box(const Box& box, Cell cell, Anchor anchor) {
  const double fx = box.x - static_cast<double>(cell.cx);
  const double fy = box.y - static_cast<double>(cell.cy);
  if (!(fx > 0.0 && fx < 1.0 && fy > 0.0 && fy < 1.0)) {
    throw std::domain_error("encode_box: center (" + std::to_string(box.x) + ", " + std::to_string(box.y) +
                            ") is not strictly inside cell (" + std::to_string(cell.cx) + ", " +
                            std::to_string(cell.cy) + ")");
  }
  if (!(box.w > 0.0 && box.h > 0.0)) throw std::domain_error("encode_box: box extents must be positive");
  return {logit(fx), logit(fy), std::log(box.w / anchor.pw), std::log(box.h / anchor.ph)};
}

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

/// Column (or row) index of the cell holding coordinate `v`. A coordinate on
/// an interior boundary belongs to the lower-index cell.
inline std::size_t cell_index(double v, std::size_t S) {
  const double f = std::floor(v);
  long c = static_cast<long>(f);
  if (v == f && c > 0) --c;
  return static_cast<std::size_t>(std::clamp<long>(c, 0, static_cast<long>(S) - 1));
}

/// IoU of two extents aligned on a common center.
inline double shape_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  return inter / (w1 * h1 + w2 * h2 - inter);
}

/// k-means over box extents with distance 1 - IoU (k-means++ seeding).
/// Returns A priors sorted by area, smallest first.
inline std::vector<Anchor> fit_anchor_priors(const std::vector<Box>& boxes, std::size_t A, std::uint64_t seed) {
  if (A == 0) throw std::invalid_argument("fit_anchor_priors: A must be positive");
  if (boxes.size() < A) {
    throw std::invalid_argument("fit_anchor_priors: need at least " + std::to_string(A) + " boxes, got " +
                                std::to_string(boxes.size()));
  }
  for (const Box& b : boxes)
    if (!(b.w > 0.0 && b.h > 0.0)) throw std::invalid_argument("fit_anchor_priors: box extents must be positive");

  Rng rng(seed);
  std::vector<Anchor> centers;
  const Box& first = boxes[rng.index(boxes.size())];
  centers.push_back({first.w, first.h});
  std::vector<double> dist(boxes.size());
  while (centers.size() < A) {
    double total = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Anchor& c : centers) best = std::min(best, 1.0 - shape_iou(boxes[i].w, boxes[i].h, c.pw, c.ph));
      dist[i] = best * best;
      total += dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (pick = 0; pick + 1 < boxes.size(); ++pick) {
        r -= dist[pick];
        if (r < 0.0) break;
      }
    } else {
      pick = rng.index(boxes.size());
    }
    centers.push_back({boxes[pick].w, boxes[pick].h});
  }

  std::vector<std::size_t> assign(boxes.size(), A);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      std::size_t best = 0;
      double best_iou = -1.0;
      for (std::size_t c = 0; c < A; ++c) {
        const double v = shape_iou(boxes[i].w, boxes[i].h, centers[c].pw, centers[c].ph);
        if (v > best_iou) {
          best_iou = v;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sw(A, 0.0), sh(A, 0.0);
    std::vector<std::size_t> count(A, 0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      sw[assign[i]] += boxes[i].w;
      sh[assign[i]] += boxes[i].h;
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < A; ++c) {
      if (count[c] == 0) continue;  // empty cluster keeps its center
      centers[c] = {sw[c] / static_cast<double>(count[c]), sh[c] / static_cast<double>(count[c])};
    }
  }
  std::stable_sort(centers.begin(), centers.end(),
                   [](const Anchor& a, const Anchor& b) { return a.pw * a.ph < b.pw * b.ph; });
  return centers;
}

/// Mean over boxes of the best aligned IoU against any prior.
inline double mean_best_prior_iou(const std::vector<Box>& boxes, const std::vector<Anchor>& priors) {
  double total = 0.0;
  for (const Box& b : boxes) {
    double best = 0.0;
    for (const Anchor& p : priors) best = std::max(best, shape_iou(b.w, b.h, p.pw, p.ph));
    total += best;
  }
  return boxes.empty() ? 0.0 : total / static_cast<double>(boxes.size());
}

}  // namespace zsyolo
