#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/tensor.hpp"

namespace zsyolo {

/// SGD with heavy-ball momentum and L2 weight decay folded into the velocity:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
struct OptimizerState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<std::vector<double>> velocity;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be nonnegative");
  }
};

inline void sgd_step(std::span<Tensor* const> params, OptimizerState& state) {
  state.validate();
  if (state.velocity.empty()) {
    for (Tensor* p : params) state.velocity.emplace_back(p->size(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("optimizer state tracks " + std::to_string(state.velocity.size()) +
                                " parameters, step received " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.has_grad()) throw std::invalid_argument("sgd_step: parameter " + std::to_string(i) + " has no gradient");
    auto& v = state.velocity[i];
    if (v.size() != p.size()) throw ShapeError("sgd_step: velocity shape does not mirror parameter " + std::to_string(i));
    const auto g = p.grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = state.momentum * v[j] + g[j] + state.weight_decay * p[j];
      p[j] -= state.learning_rate * v[j];
    }
    require_finite(p.data(), "sgd_step");
  }
}

/// Piecewise-constant learning rate: consecutive (epochs, rate) phases.
struct LrPhase {
  std::size_t epochs = 0;
  double rate = 0.0;
};

class LrSchedule {
 public:
  LrSchedule() = default;
  explicit LrSchedule(std::vector<LrPhase> phases) : phases_(std::move(phases)) {
    if (phases_.empty()) throw std::invalid_argument("learning-rate schedule has no phases");
    for (const LrPhase& p : phases_) {
      if (p.epochs == 0) throw std::invalid_argument("learning-rate phase spans zero epochs");
      if (!(p.rate > 0.0)) throw std::invalid_argument("learning rates must be positive");
    }
  }

  /// Warmup 1e-4, then 1e-3, 1e-4, 1e-5 over 1/20/11/10 epochs.
  static LrSchedule desk() { return LrSchedule({{1, 1e-4}, {20, 1e-3}, {11, 1e-4}, {10, 1e-5}}); }
  /// Same shape at full length: 5/195/110/110 epochs.
  static LrSchedule paper() { return LrSchedule({{5, 1e-4}, {195, 1e-3}, {110, 1e-4}, {110, 1e-5}}); }

  std::size_t total_epochs() const {
    std::size_t n = 0;
    for (const LrPhase& p : phases_) n += p.epochs;
    return n;
  }

  /// Rate for a zero-based epoch; changes happen on epoch boundaries.
  double rate_at(std::size_t epoch) const {
    std::size_t remaining = epoch;
    for (const LrPhase& p : phases_) {
      if (remaining < p.epochs) return p.rate;
      remaining -= p.epochs;
    }
    throw std::out_of_range("epoch " + std::to_string(epoch) + " is past the end of the schedule");
  }

  const std::vector<LrPhase>& phases() const { return phases_; }

 private:
  std::vector<LrPhase> phases_;
};

}  // namespace zsyolo
