#pragma once

// Object/background assignment and the three training losses.
//
// Every loss is a fused tape op with a hand-written backward so that the
// per-prediction bookkeeping (indicators, argmax prototype, decode) never
// becomes hundreds of scalar nodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/autodiff.hpp"
#include "zsyolo/box.hpp"
#include "zsyolo/model.hpp"
#include "zsyolo/semantics.hpp"

namespace zsyolo {

struct LossWeights {
  double lambda_obj = 5.0;
  double lambda_noobj = 1.0;
  double lambda_loc = 1.0;
  double lambda_attr = 1.0;
  double lambda_conf = 1.0;
};

struct LossBreakdown {
  double loc = 0.0;
  double attr = 0.0;
  double conf = 0.0;
  double total = 0.0;
};

/// Which predictions count as background for the no-object terms.
enum class NoObjectRule {
  cell_overlap,        // the cell's unit square touches no ground-truth box
  prediction_overlap,  // the decoded prediction touches no ground-truth box
};

struct AssignmentMask {
  std::vector<std::uint8_t> obj;
  std::vector<std::uint8_t> noobj;
  std::vector<std::optional<std::size_t>> matched_gt;

  explicit AssignmentMask(std::size_t n = 0) : obj(n, 0), noobj(n, 0), matched_gt(n) {}
  std::size_t size() const { return obj.size(); }
  std::size_t object_count() const { return static_cast<std::size_t>(std::count(obj.begin(), obj.end(), 1)); }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t k = 0; k < obj.size(); ++k) {
      h = (h ^ (obj[k] | (noobj[k] << 1) | ((matched_gt[k] ? *matched_gt[k] + 1 : 0) << 2))) * 1099511628211ULL;
    }
    return h;
  }
};

/// Positive-area overlap between a box and the unit square of a cell.
inline bool cell_overlaps(const Box& b, std::size_t cx, std::size_t cy) {
  const double x0 = static_cast<double>(cx), y0 = static_cast<double>(cy);
  const double iw = std::min(b.right(), x0 + 1.0) - std::max(b.left(), x0);
  const double ih = std::min(b.bottom(), y0 + 1.0) - std::max(b.top(), y0);
  return iw > 0.0 && ih > 0.0;
}

/// Marks, for each ground truth in input order, the prediction of its center
/// cell whose decoded box has the highest IoU with it (ties to the lower
/// anchor; a prediction already claimed by an earlier ground truth is
/// skipped). Background predictions follow `rule`; nothing is both.
inline AssignmentMask assign_indicators(std::span<const GroundTruth> gts, std::span<const Box> decoded,
                                        const GridSpec& grid,
                                        NoObjectRule rule = NoObjectRule::cell_overlap) {
  if (decoded.size() != grid.predictions()) {
    throw std::invalid_argument("assign_indicators: expected " + std::to_string(grid.predictions()) +
                                " decoded boxes, got " + std::to_string(decoded.size()));
  }
  AssignmentMask mask(grid.predictions());
  const double S = static_cast<double>(grid.S);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Box& b = gts[g].box;
    if (!(b.x >= 0.0 && b.x <= S && b.y >= 0.0 && b.y <= S)) {
      throw std::invalid_argument("assign_indicators: ground truth " + std::to_string(g) + " center lies outside the grid");
    }
    const std::size_t cx = cell_index(b.x, grid.S), cy = cell_index(b.y, grid.S);
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t a = 0; a < grid.A; ++a) {
      const std::size_t k = grid.index(cx, cy, a);
      if (mask.obj[k]) continue;
      const double v = iou(decoded[k], b);
      if (v > best_iou) {
        best_iou = v;
        best = k;
      }
    }
    if (best) {
      mask.obj[*best] = 1;
      mask.matched_gt[*best] = g;
    }
  }
  for (std::size_t cy = 0; cy < grid.S; ++cy) {
    for (std::size_t cx = 0; cx < grid.S; ++cx) {
      bool cell_touched = false;
      if (rule == NoObjectRule::cell_overlap) {
        for (const GroundTruth& gt : gts) cell_touched = cell_touched || cell_overlaps(gt.box, cx, cy);
      }
      for (std::size_t a = 0; a < grid.A; ++a) {
        const std::size_t k = grid.index(cx, cy, a);
        if (mask.obj[k]) continue;
        bool touched = cell_touched;
        if (rule == NoObjectRule::prediction_overlap) {
          for (const GroundTruth& gt : gts) touched = touched || iou(decoded[k], gt.box) > 0.0;
        }
        mask.noobj[k] = touched ? 0 : 1;
      }
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Scalar terms

/// One prediction's confidence term given the squashed score p.
inline double confidence_term(double p, bool obj, bool noobj, const LossWeights& w) {
  double v = 0.0;
  if (obj) v += w.lambda_obj * (p - 1.0) * (p - 1.0);
  if (noobj) v += w.lambda_noobj * p * p;
  return v;
}

/// lambda_obj (S(pred, target) - 1)^2 for a matched prediction.
inline double semantic_object_term(std::span<const double> pred, std::span<const double> target, const LossWeights& w) {
  const double s = cosine_similarity(pred, target);
  return w.lambda_obj * (s - 1.0) * (s - 1.0);
}

struct BestSeen {
  double similarity = 0.0;
  std::optional<ClassId> class_id;
};

/// Highest cosine similarity to any seen prototype; ties to the lowest id.
inline BestSeen best_seen_similarity(std::span<const double> pred, const PrototypeTable& protos) {
  BestSeen best;
  for (const ClassPrototype& c : protos.classes()) {
    if (!c.seen) continue;
    const double s = cosine_similarity(pred, c.vector);
    if (!best.class_id || s > best.similarity || (s == best.similarity && c.id < *best.class_id)) {
      best.similarity = s;
      best.class_id = c.id;
    }
  }
  return best;
}

/// lambda_noobj (max_seen S(pred, y_c))^2 for a background prediction.
inline double semantic_background_term(std::span<const double> pred, const PrototypeTable& protos,
                                       const LossWeights& w) {
  const double m = best_seen_similarity(pred, protos).similarity;
  return w.lambda_noobj * m * m;
}

namespace detail {

/// Adds scale * dS(a, b)/da to `out`; no-op for zero-norm vectors.
inline void add_cosine_grad(std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> out) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return;
  const double s = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += scale * (b[i] / (na * nb) - s * a[i] / (na * na));
}

inline void check_head(const Var& v, std::size_t channels, const GridSpec& grid, const char* what) {
  if (v.shape() != Shape{channels, grid.S, grid.S}) {
    throw ShapeError(std::string(what) + " must be " + shape_str({channels, grid.S, grid.S}) + ", got " +
                     shape_str(v.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tape ops

/// Sum over matched predictions of squared center error plus squared error
/// of the square-rooted extents, all in grid units.
inline Var loc_loss(Var offsets, std::span<const GroundTruth> gts, const AssignmentMask& mask, const GridSpec& grid) {
  detail::check_head(offsets, 4 * grid.A, grid, "loc_loss offsets");
  const Tensor& tl = offsets.value();
  struct Term {
    std::size_t cx, cy, a;
    double dx, dy, dw, dh;  // derivative wrt each raw offset
  };
  std::vector<Term> terms;
  double total = 0.0;
  for (std::size_t cy = 0; cy < grid.S; ++cy) {
    for (std::size_t cx = 0; cx < grid.S; ++cx) {
      for (std::size_t a = 0; a < grid.A; ++a) {
        const std::size_t k = grid.index(cx, cy, a);
        if (!mask.obj[k]) continue;
        const Box& t = gts[*mask.matched_gt[k]].box;
        const Offsets o = offsets_at(tl, cx, cy, a);
        const Box p = decode_box(o, {cx, cy}, grid.priors[a]);
        const double ex = p.x - t.x, ey = p.y - t.y;
        const double sw = std::sqrt(p.w), sh = std::sqrt(p.h);
        const double ew = sw - std::sqrt(t.w), eh = sh - std::sqrt(t.h);
        total += ex * ex + ey * ey + ew * ew + eh * eh;
        const double sx = sigmoid(o.ox), sy = sigmoid(o.oy);
        terms.push_back({cx, cy, a, 2.0 * ex * sx * (1.0 - sx), 2.0 * ey * sy * (1.0 - sy), ew * sw, eh * sh});
      }
    }
  }
  const std::size_t id = offsets.id();
  const std::size_t S = grid.S;
  return offsets.graph().record(
      Tensor::scalar(total), {id},
      [terms, id, S](Graph& g, std::size_t self) {
        const double go = g.grad(self)[0];
        auto& gi = g.grad(id);
        for (const Term& t : terms) {
          const std::size_t base = t.cy * S + t.cx;
          const std::size_t plane = S * S;
          gi[(4 * t.a + 0) * plane + base] += go * t.dx;
          gi[(4 * t.a + 1) * plane + base] += go * t.dy;
          gi[(4 * t.a + 2) * plane + base] += go * t.dw;
          gi[(4 * t.a + 3) * plane + base] += go * t.dh;
        }
      },
      "loc_loss");
}

/// Object predictions are pulled toward their class prototype by cosine
/// similarity; background predictions are pushed away from the nearest seen
/// prototype. The max is differentiated through its argmax only.
inline Var semantic_loss(Var semantics, std::span<const GroundTruth> gts, const PrototypeTable& protos,
                         const AssignmentMask& mask, const LossWeights& w, const GridSpec& grid) {
  const std::size_t h = protos.dim();
  detail::check_head(semantics, grid.A * h, grid, "semantic_loss predictions");
  const Tensor& ts = semantics.value();
  const std::size_t S = grid.S, plane = S * S;
  std::vector<double> grad(ts.size(), 0.0);
  std::vector<double> pred(h), gpred(h);
  double total = 0.0;
  std::uint64_t argmax_hash = 0;
  for (std::size_t cy = 0; cy < S; ++cy) {
    for (std::size_t cx = 0; cx < S; ++cx) {
      for (std::size_t a = 0; a < grid.A; ++a) {
        const std::size_t k = grid.index(cx, cy, a);
        if (!mask.obj[k] && !mask.noobj[k]) continue;
        for (std::size_t i = 0; i < h; ++i) pred[i] = ts[(a * h + i) * plane + cy * S + cx];
        std::fill(gpred.begin(), gpred.end(), 0.0);
        if (mask.obj[k]) {
          const auto& target = protos.at(gts[*mask.matched_gt[k]].class_id).vector;
          const double s = cosine_similarity(pred, target);
          total += w.lambda_obj * (s - 1.0) * (s - 1.0);
          detail::add_cosine_grad(pred, target, 2.0 * w.lambda_obj * (s - 1.0), gpred);
        }
        if (mask.noobj[k]) {
          const BestSeen best = best_seen_similarity(pred, protos);
          total += w.lambda_noobj * best.similarity * best.similarity;
          argmax_hash = argmax_hash * 131 + static_cast<std::uint64_t>(best.class_id.value_or(-1) + 1);
          if (best.class_id) {
            detail::add_cosine_grad(pred, protos.at(*best.class_id).vector, 2.0 * w.lambda_noobj * best.similarity,
                                    gpred);
          }
        }
        for (std::size_t i = 0; i < h; ++i) grad[(a * h + i) * plane + cy * S + cx] += gpred[i];
      }
    }
  }
  semantics.graph().note_branch(argmax_hash);
  const std::size_t id = semantics.id();
  return semantics.graph().record(
      Tensor::scalar(total), {id},
      [grad = std::move(grad), id](Graph& g, std::size_t self) {
        const double go = g.grad(self)[0];
        auto& gi = g.grad(id);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go * grad[i];
      },
      "semantic_loss");
}

/// Squared error of sigmoid(raw confidence) against 1 (objects) or 0
/// (background), weighted by lambda_obj / lambda_noobj.
inline Var confidence_loss(Var confidence, const AssignmentMask& mask, const LossWeights& w, const GridSpec& grid) {
  detail::check_head(confidence, grid.A, grid, "confidence_loss scores");
  const Tensor& tc = confidence.value();
  const std::size_t S = grid.S, plane = S * S;
  std::vector<double> grad(tc.size(), 0.0);
  double total = 0.0;
  for (std::size_t cy = 0; cy < S; ++cy) {
    for (std::size_t cx = 0; cx < S; ++cx) {
      for (std::size_t a = 0; a < grid.A; ++a) {
        const std::size_t k = grid.index(cx, cy, a);
        const std::size_t at = a * plane + cy * S + cx;
        const double p = sigmoid(tc[at]);
        total += confidence_term(p, mask.obj[k], mask.noobj[k], w);
        double dp = 0.0;
        if (mask.obj[k]) dp += 2.0 * w.lambda_obj * (p - 1.0);
        if (mask.noobj[k]) dp += 2.0 * w.lambda_noobj * p;
        grad[at] = dp * p * (1.0 - p);
      }
    }
  }
  const std::size_t id = confidence.id();
  return confidence.graph().record(
      Tensor::scalar(total), {id},
      [grad = std::move(grad), id](Graph& g, std::size_t self) {
        const double go = g.grad(self)[0];
        auto& gi = g.grad(id);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go * grad[i];
      },
      "confidence_loss");
}

struct LossGraph {
  Var total;
  LossBreakdown breakdown;
  AssignmentMask mask;
  HeadOutputs outputs;
};

/// Forward pass plus the weighted objective on `g`. Ground truths are in
/// grid units.
template <class M>
LossGraph build_loss(Graph& g, M& model, const Tensor& image, std::span<const GroundTruth> gts,
                     const PrototypeTable& protos, const LossWeights& w,
                     NoObjectRule rule = NoObjectRule::cell_overlap) {
  const GridSpec& grid = model.grid();
  if (protos.dim() != model.config().h) {
    throw std::invalid_argument("prototype dimension " + std::to_string(protos.dim()) + " does not match model h=" +
                                std::to_string(model.config().h));
  }
  LossGraph out;
  out.outputs = model.forward(g, image);
  const std::vector<Box> decoded = decode_all(out.outputs.offsets.value(), grid);
  out.mask = assign_indicators(gts, decoded, grid, rule);
  g.note_branch(out.mask.hash());
  Var loc = loc_loss(out.outputs.offsets, gts, out.mask, grid);
  Var attr = semantic_loss(out.outputs.semantics, gts, protos, out.mask, w, grid);
  Var conf = confidence_loss(out.outputs.confidence, out.mask, w, grid);
  const Var terms[] = {loc, attr, conf};
  const double weights[] = {w.lambda_loc, w.lambda_attr, w.lambda_conf};
  out.total = weighted_sum(terms, weights);
  out.breakdown = {loc.value().item(), attr.value().item(), conf.value().item(), out.total.value().item()};
  return out;
}

/// Loss values for one image without keeping the tape.
inline LossBreakdown total_loss(const Tensor& image, std::span<const GroundTruth> gts, const Model& model,
                                const PrototypeTable& protos, const LossWeights& w,
                                NoObjectRule rule = NoObjectRule::cell_overlap) {
  Graph g;
  return build_loss(g, model, image, gts, protos, w, rule).breakdown;
}

}  // namespace zsyolo
