#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/box.hpp"
#include "zsyolo/rng.hpp"

namespace zsyolo {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; 0 when either vector has zero norm.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

struct ClassPrototype {
  ClassId id = 0;
  std::string name;
  std::vector<double> vector;
  bool seen = true;

  friend bool operator==(const ClassPrototype&, const ClassPrototype&) = default;
};

/// Per-class semantic vectors with seen/unseen flags.
class PrototypeTable {
 public:
  PrototypeTable() = default;
  explicit PrototypeTable(std::vector<ClassPrototype> classes) : classes_(std::move(classes)) { validate(); }

  void validate() const {
    if (classes_.empty()) throw std::invalid_argument("prototype table is empty");
    const std::size_t h = classes_.front().vector.size();
    if (h == 0) throw std::invalid_argument("prototype vectors must be nonempty");
    bool any_seen = false;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      const ClassPrototype& c = classes_[i];
      if (c.vector.size() != h) {
        throw std::invalid_argument("class '" + c.name + "' has a " + std::to_string(c.vector.size()) +
                                    "-dim prototype, table dimension is " + std::to_string(h));
      }
      for (std::size_t j = 0; j < i; ++j)
        if (classes_[j].id == c.id) throw std::invalid_argument("duplicate class id " + std::to_string(c.id));
      any_seen = any_seen || c.seen;
    }
    if (!any_seen) throw std::invalid_argument("prototype table has no seen class");
  }

  std::size_t dim() const { return classes_.empty() ? 0 : classes_.front().vector.size(); }
  std::size_t size() const { return classes_.size(); }
  const std::vector<ClassPrototype>& classes() const { return classes_; }

  bool contains(ClassId id) const {
    return std::any_of(classes_.begin(), classes_.end(), [&](const ClassPrototype& c) { return c.id == id; });
  }

  const ClassPrototype& at(ClassId id) const {
    for (const ClassPrototype& c : classes_)
      if (c.id == id) return c;
    throw std::out_of_range("unknown class id " + std::to_string(id));
  }

  std::vector<ClassId> ids(bool seen) const {
    std::vector<ClassId> out;
    for (const ClassPrototype& c : classes_)
      if (c.seen == seen) out.push_back(c.id);
    return out;
  }

  /// Copy with seen flags set from the given unseen set.
  PrototypeTable with_unseen(std::span<const ClassId> unseen) const {
    std::vector<ClassPrototype> out = classes_;
    for (ClassPrototype& c : out) c.seen = std::find(unseen.begin(), unseen.end(), c.id) == unseen.end();
    return PrototypeTable(std::move(out));
  }

  friend bool operator==(const PrototypeTable&, const PrototypeTable&) = default;

 private:
  std::vector<ClassPrototype> classes_;
};

struct ClassInstances {
  ClassId id = 0;
  std::string name;
  std::vector<std::vector<double>> instances;
};

/// Class-level prototypes as the componentwise mean of instance attributes.
inline PrototypeTable average_class_attributes(const std::vector<ClassInstances>& classes) {
  std::vector<ClassPrototype> out;
  std::optional<std::size_t> dim;
  for (const ClassInstances& c : classes) {
    if (c.instances.empty()) throw std::invalid_argument("class '" + c.name + "' has no instances to average");
    std::vector<double> mean(c.instances.front().size(), 0.0);
    if (!dim) dim = mean.size();
    for (const auto& inst : c.instances) {
      if (inst.size() != *dim) throw std::invalid_argument("class '" + c.name + "' has an instance of wrong dimension");
      for (std::size_t i = 0; i < inst.size(); ++i) mean[i] += inst[i];
    }
    for (double& v : mean) v /= static_cast<double>(c.instances.size());
    out.push_back({c.id, c.name, std::move(mean), true});
  }
  return PrototypeTable(std::move(out));
}

enum class PrototypeMode { attributes, onehot, random, w2vR };

inline std::string to_string(PrototypeMode m) {
  switch (m) {
    case PrototypeMode::attributes: return "attributes";
    case PrototypeMode::onehot: return "onehot";
    case PrototypeMode::random: return "random";
    case PrototypeMode::w2vR: return "w2vR";
  }
  return "attributes";
}

inline PrototypeMode parse_prototype_mode(const std::string& s) {
  if (s == "attributes") return PrototypeMode::attributes;
  if (s == "onehot") return PrototypeMode::onehot;
  if (s == "random") return PrototypeMode::random;
  if (s == "w2vR") return PrototypeMode::w2vR;
  throw std::invalid_argument("unknown prototype mode '" + s + "' (expected attributes, onehot, random or w2vR)");
}

/// One-hot (h must equal the class count) or uniform [0,1) random vectors
/// for classes 0..n-1, all flagged seen.
inline PrototypeTable synthetic_prototypes(PrototypeMode mode, std::size_t n_classes, std::size_t h,
                                           std::uint64_t seed) {
  if (n_classes == 0 || h == 0) throw std::invalid_argument("synthetic_prototypes: need classes and h > 0");
  std::vector<ClassPrototype> out;
  if (mode == PrototypeMode::onehot) {
    if (h != n_classes) {
      throw std::invalid_argument("one-hot prototypes need h == n_classes (h=" + std::to_string(h) +
                                  ", classes=" + std::to_string(n_classes) + ")");
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::vector<double> v(h, 0.0);
      v[c] = 1.0;
      out.push_back({static_cast<ClassId>(c), "class_" + std::to_string(c), std::move(v), true});
    }
  } else if (mode == PrototypeMode::random) {
    Rng rng(seed);
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::vector<double> v(h);
      for (double& x : v) x = rng.uniform();
      out.push_back({static_cast<ClassId>(c), "class_" + std::to_string(c), std::move(v), true});
    }
  } else {
    throw std::invalid_argument("synthetic_prototypes supports onehot and random only");
  }
  return PrototypeTable(std::move(out));
}

/// Replaces the vectors of `table` (ids, names, seen flags kept) with
/// synthetic ones assigned in table order.
inline PrototypeTable replace_vectors(const PrototypeTable& table, const PrototypeTable& vectors) {
  if (vectors.size() != table.size()) throw std::invalid_argument("replace_vectors: class count mismatch");
  std::vector<ClassPrototype> out = table.classes();
  for (std::size_t i = 0; i < out.size(); ++i) out[i].vector = vectors.classes()[i].vector;
  return PrototypeTable(std::move(out));
}

// ---------------------------------------------------------------------------
// Reduced embedding: find P with <P w_i, P w_j> ~ <y_i, y_j>.

struct Projection {
  Eigen::MatrixXd P;  // target_dim x source_dim
  std::size_t source_dim = 0;
  std::size_t target_dim = 0;
  double fit_error = 0.0;
};

/// Rows of Y are class attribute vectors (n x h), rows of W the matching
/// source embeddings (n x d).
///
/// The target Gram K = Y Y^T is factored by symmetric eigendecomposition with
/// negative eigenvalues clamped to zero; the top target_dim scaled
/// eigenvectors give the reduced embedding X (target_dim x n, zero rows past
/// the rank). P is the ridge least-squares map onto X in its n x n form,
///   P = X (W W^T + ridge I)^-1 W,
/// and fit_error = || (P W^T)^T (P W^T) - K ||_F.
inline Projection learn_projection(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& W, std::size_t target_dim,
                                   double ridge = 1e-8) {
  const Eigen::Index n = Y.rows();
  if (n < 2) throw std::invalid_argument("learn_projection needs at least two classes");
  if (W.rows() != n) throw std::invalid_argument("learn_projection: Y and W must have one row per class");
  if (target_dim == 0) throw std::invalid_argument("learn_projection: target dimension must be positive");
  if (static_cast<Eigen::Index>(target_dim) > W.cols()) {
    throw std::invalid_argument("learn_projection: target dimension " + std::to_string(target_dim) +
                                " exceeds source dimension " + std::to_string(W.cols()));
  }
  if (ridge < 0.0) throw std::invalid_argument("learn_projection: ridge must be nonnegative");

  const Eigen::MatrixXd K = Y * Y.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  const Eigen::VectorXd& lambda = eig.eigenvalues();  // ascending
  const Eigen::MatrixXd& U = eig.eigenvectors();

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(target_dim), n);
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(target_dim) && r < n; ++r) {
    const Eigen::Index col = n - 1 - r;
    const double l = std::max(lambda(col), 0.0);
    Eigen::VectorXd u = U.col(col);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(u(i)) > 1e-12) {
        if (u(i) < 0.0) u = -u;
        break;
      }
    }
    X.row(r) = std::sqrt(l) * u.transpose();
  }

  Eigen::MatrixXd G = W * W.transpose();
  G.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> solver(G);
  const double scale = std::max(G.diagonal().cwiseAbs().maxCoeff(), 1.0);
  const Eigen::VectorXd d = solver.vectorD();
  bool singular = solver.info() != Eigen::Success;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!(d(i) > 1e-13 * scale)) singular = true;
  if (singular) {
    throw std::invalid_argument(
        "learn_projection: W W^T is singular (W lacks full row rank); set ridge > 0 to regularize");
  }

  Projection proj;
  proj.P = X * solver.solve(W);
  proj.source_dim = static_cast<std::size_t>(W.cols());
  proj.target_dim = target_dim;
  const Eigen::MatrixXd Z = proj.P * W.transpose();
  proj.fit_error = (Z.transpose() * Z - K).norm();
  return proj;
}

inline std::vector<double> project(const Projection& proj, std::span<const double> w) {
  if (w.size() != proj.source_dim) {
    throw std::invalid_argument("project: vector has dimension " + std::to_string(w.size()) + ", projection expects " +
                                std::to_string(proj.source_dim));
  }
  const Eigen::Map<const Eigen::VectorXd> v(w.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::VectorXd out = proj.P * v;
  return {out.data(), out.data() + out.size()};
}

/// Mean over unseen classes of the best cosine similarity to any seen class.
inline double energy_score(const PrototypeTable& table) {
  const auto seen = table.ids(true);
  const auto unseen = table.ids(false);
  if (seen.empty() || unseen.empty()) throw std::invalid_argument("energy_score needs seen and unseen classes");
  double total = 0.0;
  for (ClassId a : unseen) {
    double best = -1.0;
    for (ClassId b : seen) best = std::max(best, cosine_similarity(table.at(a).vector, table.at(b).vector));
    total += best;
  }
  return total / static_cast<double>(unseen.size());
}

enum class Restrict { all, seen, unseen };

struct Recognition {
  ClassId class_id = 0;
  double similarity = 0.0;
  bool degenerate = false;  // zero-norm prediction
};

/// Nearest prototype by cosine similarity; ties go to the lowest class id.
inline Recognition nn_classify(std::span<const double> prediction, const PrototypeTable& table,
                               Restrict restrict = Restrict::all) {
  if (prediction.size() != table.dim()) {
    throw std::invalid_argument("nn_classify: prediction has dimension " + std::to_string(prediction.size()) +
                                ", prototypes have " + std::to_string(table.dim()));
  }
  std::optional<Recognition> best;
  const bool zero = norm(prediction) == 0.0;
  for (const ClassPrototype& c : table.classes()) {
    if (restrict == Restrict::seen && !c.seen) continue;
    if (restrict == Restrict::unseen && c.seen) continue;
    const double s = cosine_similarity(prediction, c.vector);
    if (!best || s > best->similarity || (s == best->similarity && c.id < best->class_id)) {
      best = Recognition{c.id, s, zero};
    }
  }
  if (!best) throw std::invalid_argument("nn_classify: no eligible classes");
  return *best;
}

}  // namespace zsyolo
