#pragma once

// Taped reverse-mode differentiation over Tensor values.
//
// A Graph records one forward pass. Every op appends a node whose inputs all
// precede it, so tape order is a topological order and backward() is a single
// reverse sweep. Parameters enter the tape by reference; their gradients are
// accumulated into Tensor::grad() when backward() finishes.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsyolo/tensor.hpp"

namespace zsyolo {

class Graph;

/// Handle to a node on a Graph tape.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::span<const double> grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) {
    require_finite(value.data(), "constant");
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
  }

  /// Binds an external tensor as a leaf. The tensor must outlive the graph and
  /// must not be modified until the graph is discarded.
  Var parameter(Tensor& param) {
    Node n;
    n.param = &param;
    n.mutable_param = &param;
    n.needs_grad = param.requires_grad();
    return push(std::move(n));
  }

  /// Read-only binding: the tensor takes no gradient on this tape.
  Var parameter(const Tensor& param) {
    Node n;
    n.param = &param;
    return push(std::move(n));
  }

  /// Appends an op result. `backward` reads grad(self) and accumulates into
  /// the grads of `inputs`.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op) {
    require_finite(value.data(), op);
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (std::size_t in : n.inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? *n.param : n.value;
  }
  std::vector<double>& grad(std::size_t id) { return nodes_[id].grad; }
  const std::vector<double>& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Fills d(loss)/d(param) into every bound parameter with requires_grad set.
  /// Parameter gradients accumulate across calls; node gradients do not.
  void backward(Var loss) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    for (Node& n : nodes_) {
      if (n.needs_grad) n.grad.assign(value_size(n), 0.0);
    }
    if (!nodes_[loss.id()].needs_grad) return;
    nodes_[loss.id()].grad[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.needs_grad) continue;
      if (n.backward) n.backward(*this, id);
      require_finite(n.grad, "backward");
    }
    for (Node& n : nodes_) {
      if (!n.mutable_param || !n.needs_grad) continue;
      auto g = n.mutable_param->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }

  /// Ops with data-dependent branches (activation kinks, argmax picks) fold
  /// their choice into this signature so perturbation tests can tell when a
  /// finite difference straddles a branch.
  void note_branch(std::uint64_t v) {
    constexpr std::uint64_t kPrime = 1099511628211ULL;
    for (int i = 0; i < 8; ++i) {
      signature_ ^= (v >> (8 * i)) & 0xffu;
      signature_ *= kPrime;
    }
  }
  std::uint64_t branch_signature() const { return signature_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* param = nullptr;
    Tensor* mutable_param = nullptr;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  static std::size_t value_size(const Node& n) { return n.param ? n.param->size() : n.value.size(); }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::uint64_t signature_ = 14695981039346656037ULL;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline std::span<const double> Var::grad() const { return graph_->grad(id_); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline void require_same_graph(const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("operands live on different graphs");
}

}  // namespace detail

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// 2-D cross-correlation of a C_in x H x W input with a C_out x C_in x k x k
/// kernel, plus an optional per-output-channel bias.
inline Var conv2d(Var input, Var kernel, std::optional<Var> bias, std::size_t stride, std::size_t pad) {
  detail::require_same_graph(input, kernel);
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 3) throw ShapeError("conv2d input must be C x H x W, got " + shape_str(xs));
  if (ks.size() != 4 || ks[2] != ks[3]) {
    throw ShapeError("conv2d kernel must be C_out x C_in x k x k, got " + shape_str(ks));
  }
  if (ks[1] != xs[0]) {
    throw ShapeError("conv2d kernel expects " + std::to_string(ks[1]) + " input channels, input " +
                     shape_str(xs) + " has " + std::to_string(xs[0]));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  const std::size_t cin = xs[0], h = xs[1], w = xs[2];
  const std::size_t cout = ks[0], k = ks[2];
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw ShapeError("conv2d kernel " + std::to_string(k) + " larger than padded input " + shape_str(xs));
  }
  if (bias) {
    detail::require_same_graph(input, *bias);
    if (bias->shape() != Shape{cout}) {
      throw ShapeError("conv2d bias must have shape [" + std::to_string(cout) + "], got " +
                       shape_str(bias->shape()));
    }
  }
  const std::size_t oh = conv_out_extent(h, k, stride, pad);
  const std::size_t ow = conv_out_extent(w, k, stride, pad);
  const std::size_t npix = oh * ow;
  const std::size_t patch = cin * k * k;

  // im2col: one row per (c, ky, kx), one column per output pixel
  std::vector<double> cols(patch * npix, 0.0);
  const auto x = input.value().data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((c * k + ky) * k + kx) * npix;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            row[oy * ow + ox] = x[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }

  Tensor out({cout, oh, ow});
  detail::MapMat out_m(out.data().data(), cout, npix);
  detail::ConstMapMat w_m(kernel.value().data().data(), cout, patch);
  detail::ConstMapMat cols_m(cols.data(), patch, npix);
  out_m.noalias() = w_m * cols_m;
  if (bias) {
    const auto b = bias->value().data();
    for (std::size_t o = 0; o < cout; ++o) out_m.row(o).array() += b[o];
  }

  std::vector<std::size_t> inputs{input.id(), kernel.id()};
  if (bias) inputs.push_back(bias->id());
  auto backward = [=, cols = std::move(cols)](Graph& g, std::size_t self) {
    detail::ConstMapMat gout(g.grad(self).data(), cout, npix);
    const std::size_t xid = inputs[0], wid = inputs[1];
    if (g.needs_grad(wid)) {
      detail::MapMat gw(g.grad(wid).data(), cout, patch);
      gw.noalias() += gout * detail::ConstMapMat(cols.data(), patch, npix).transpose();
    }
    if (inputs.size() == 3 && g.needs_grad(inputs[2])) {
      auto& gb = g.grad(inputs[2]);
      for (std::size_t o = 0; o < cout; ++o) gb[o] += gout.row(o).sum();
    }
    if (g.needs_grad(xid)) {
      detail::RowMat gcols = detail::ConstMapMat(g.value(wid).data().data(), cout, patch).transpose() * gout;
      auto& gx = g.grad(xid);
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double* row = gcols.data() + ((c * k + ky) * k + kx) * npix;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                gx[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[oy * ow + ox];
              }
            }
          }
        }
      }
    }
  };
  return input.graph().record(std::move(out), std::move(inputs), std::move(backward), "conv2d");
}

inline Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t pad) {
  return conv2d(input, kernel, std::nullopt, stride, pad);
}

inline constexpr double kLeakySlope = 0.1;

/// x for x > 0, 0.1 x otherwise. The derivative at exactly 0 is 0.1.
inline Var leaky_relu(Var x) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  std::uint64_t mask_hash = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const bool pos = in[i] > 0.0;
    out[i] = pos ? in[i] : kLeakySlope * in[i];
    mask_hash = mask_hash * 31 + (pos ? 1 : 0);
  }
  x.graph().note_branch(mask_hash);
  const std::size_t xid = x.id();
  return x.graph().record(
      std::move(out), {xid},
      [xid](Graph& g, std::size_t self) {
        const auto& go = g.grad(self);
        const auto xv = g.value(xid).data();
        auto& gx = g.grad(xid);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (xv[i] > 0.0 ? 1.0 : kLeakySlope);
      },
      "leaky_relu");
}

/// Stacks C_i x H x W tensors along the channel axis.
inline Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one input");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 3) throw ShapeError("concat_channels inputs must be C x H x W, got " + shape_str(s0));
  std::size_t channels = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    detail::require_same_graph(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != 3 || s[1] != s0[1] || s[2] != s0[2]) {
      throw ShapeError("concat_channels spatial mismatch: " + shape_str(s0) + " vs " + shape_str(s));
    }
    offsets.push_back(channels * s0[1] * s0[2]);
    channels += s[0];
    ids.push_back(p.id());
  }
  Tensor out({channels, s0[1], s0[2]});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto v = parts[i].value().data();
    std::copy(v.begin(), v.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[i]));
  }
  return parts[0].graph().record(
      std::move(out), ids,
      [ids, offsets](Graph& g, std::size_t self) {
        const auto& go = g.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!g.needs_grad(ids[i])) continue;
          auto& gi = g.grad(ids[i]);
          for (std::size_t j = 0; j < gi.size(); ++j) gi[j] += go[offsets[i] + j];
        }
      },
      "concat_channels");
}

inline Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xid = x.id();
  return x.graph().record(
      Tensor::scalar(s), {xid},
      [xid](Graph& g, std::size_t self) {
        const double go = g.grad(self)[0];
        for (double& v : g.grad(xid)) v += go;
      },
      "sum");
}

inline Var square(Var x) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * in[i];
  const std::size_t xid = x.id();
  return x.graph().record(
      std::move(out), {xid},
      [xid](Graph& g, std::size_t self) {
        const auto& go = g.grad(self);
        const auto xv = g.value(xid).data();
        auto& gx = g.grad(xid);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += 2.0 * xv[i] * go[i];
      },
      "square");
}

/// sum_i weight_i * term_i over scalar terms, reduced in input order.
inline Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw ShapeError("weighted_sum needs one weight per term");
  }
  double total = 0.0;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    detail::require_same_graph(terms[0], terms[i]);
    total += weights[i] * terms[i].value().item();
    ids.push_back(terms[i].id());
  }
  std::vector<double> w(weights.begin(), weights.end());
  return terms[0].graph().record(
      Tensor::scalar(total), ids,
      [ids, w](Graph& g, std::size_t self) {
        const double go = g.grad(self)[0];
        for (std::size_t i = 0; i < ids.size(); ++i)
          if (g.needs_grad(ids[i])) g.grad(ids[i])[0] += w[i] * go;
      },
      "weighted_sum");
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// True when some perturbed evaluation took a different branch than the
  /// base point (activation sign, argmax, assignment); the comparison is then
  /// not meaningful.
  bool crossed_branch = false;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Compares backward() against central differences for every coordinate of
/// every tensor in `params`. `fn` builds the scalar objective on a fresh graph.
/// Parameters are restored before returning.
inline GradCheckResult grad_check_params(const std::function<Var(Graph&)>& fn, std::span<Tensor* const> params,
                                         double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check step must be positive");
  std::vector<bool> prior_flag;
  for (Tensor* p : params) {
    prior_flag.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->zero_grad();
  }
  std::uint64_t base_signature = 0;
  {
    Graph g;
    Var loss = fn(g);
    g.backward(loss);
    base_signature = g.branch_signature();
  }
  auto eval = [&](std::uint64_t& sig) {
    Graph g;
    const double v = fn(g).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    sig = g.branch_signature();
    return v;
  };
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      std::uint64_t sp = 0, sm = 0;
      p[i] = orig + step;
      const double fp = eval(sp);
      p[i] = orig - step;
      const double fm = eval(sm);
      p[i] = orig;
      if (sp != base_signature || sm != base_signature) result.crossed_branch = true;
      const double numeric = (fp - fm) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->set_requires_grad(prior_flag[pi]);
  return result;
}

/// Single-tensor form: `fn` maps the input var to a scalar var.
inline GradCheckResult grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point, double step) {
  Tensor x = point;
  Tensor* params[] = {&x};
  return grad_check_params([&](Graph& g) { return fn(g, g.parameter(x)); }, params, step);
}

}  // namespace zsyolo
