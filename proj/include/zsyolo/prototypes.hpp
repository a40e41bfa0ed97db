#pragma once

// Building prototype tables in each mode, and the source word-embedding
// file used by the reduced-embedding mode:
//   {"dim": d, "embeddings": [{"id", "name", "vector"}]}

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "zsyolo/manifest.hpp"
#include "zsyolo/rng.hpp"
#include "zsyolo/semantics.hpp"

namespace zsyolo {

struct Embeddings {
  std::size_t dim = 0;
  std::vector<ClassPrototype> vectors;  // seen flags unused

  const std::vector<double>& at(ClassId id) const {
    for (const ClassPrototype& c : vectors)
      if (c.id == id) return c.vector;
    throw std::out_of_range("no source embedding for class id " + std::to_string(id));
  }
};

/// Stand-in word vectors: a fixed random linear map of each attribute
/// vector plus per-class Gaussian noise.
inline Embeddings synthetic_embeddings(const PrototypeTable& attributes, std::size_t dim, std::uint64_t seed,
                                       double noise = 0.25) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
  Rng rng(seed);
  const std::size_t h = attributes.dim();
  std::vector<double> M(dim * h);
  for (double& m : M) m = rng.normal() / std::sqrt(static_cast<double>(h));
  Embeddings out;
  out.dim = dim;
  for (const ClassPrototype& c : attributes.classes()) {
    std::vector<double> v(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < h; ++j) v[i] += M[i * h + j] * c.vector[j];
      v[i] += noise * rng.normal();
    }
    out.vectors.push_back({c.id, c.name, std::move(v), true});
  }
  return out;
}

inline std::string embeddings_text(const Embeddings& e) {
  nlohmann::ordered_json root;
  root["dim"] = e.dim;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ClassPrototype& c : e.vectors) arr.push_back({{"id", c.id}, {"name", c.name}, {"vector", c.vector}});
  root["embeddings"] = std::move(arr);
  return root.dump(2) + "\n";
}

inline Embeddings load_embeddings(const std::string& path) {
  const auto root = detail::parse_file(path);
  Embeddings e;
  e.dim = detail::field<std::size_t>(root, "dim", path);
  if (!root.contains("embeddings") || !root["embeddings"].is_array()) {
    throw ManifestError(path + ": missing 'embeddings' array");
  }
  for (std::size_t i = 0; i < root["embeddings"].size(); ++i) {
    const auto& o = root["embeddings"][i];
    const std::string where = path + ": embeddings[" + std::to_string(i) + "]";
    ClassPrototype c;
    c.id = detail::field<ClassId>(o, "id", where);
    c.name = detail::field<std::string>(o, "name", where);
    c.vector = detail::field<std::vector<double>>(o, "vector", where);
    if (c.vector.size() != e.dim) {
      throw ManifestError(where + ": vector has " + std::to_string(c.vector.size()) + " entries, dim is " +
                          std::to_string(e.dim));
    }
    e.vectors.push_back(std::move(c));
  }
  return e;
}

struct PrototypeBuild {
  PrototypeTable table;
  double fit_error = 0.0;  // reduced-embedding mode only
};

struct PrototypeOptions {
  PrototypeMode mode = PrototypeMode::attributes;
  std::uint64_t seed = 0;
  const Embeddings* embeddings = nullptr;  // required for w2vR
  std::size_t target_dim = 8;
  double ridge = 1e-8;
  bool normalize_embeddings = false;  // unit-length source vectors before fitting
};

/// Prototype table with the ids, names and seen flags of `attributes`.
/// Random vectors keep the attribute dimension; one-hot uses one dimension
/// per class. The reduced embedding is fit on seen classes only, then
/// applied to every class.
inline PrototypeBuild build_prototypes(const PrototypeTable& attributes, const PrototypeOptions& opt) {
  const std::size_t n = attributes.size();
  switch (opt.mode) {
    case PrototypeMode::attributes: return {attributes, 0.0};
    case PrototypeMode::onehot:
      return {replace_vectors(attributes, synthetic_prototypes(PrototypeMode::onehot, n, n, opt.seed)), 0.0};
    case PrototypeMode::random:
      return {replace_vectors(attributes, synthetic_prototypes(PrototypeMode::random, n, attributes.dim(), opt.seed)),
              0.0};
    case PrototypeMode::w2vR: break;
  }
  if (!opt.embeddings) throw std::invalid_argument("w2vR prototypes need source embeddings");
  auto source = [&](ClassId id) {
    std::vector<double> w = opt.embeddings->at(id);
    const double len = norm(w);
    if (opt.normalize_embeddings && len > 0.0)
      for (double& v : w) v /= len;
    return w;
  };
  const auto seen = attributes.ids(true);
  const auto rows = static_cast<Eigen::Index>(seen.size());
  Eigen::MatrixXd Y(rows, static_cast<Eigen::Index>(attributes.dim()));
  Eigen::MatrixXd W(rows, static_cast<Eigen::Index>(opt.embeddings->dim));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& y = attributes.at(seen[static_cast<std::size_t>(r)]).vector;
    const auto w = source(seen[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < Y.cols(); ++j) Y(r, j) = y[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < W.cols(); ++j) W(r, j) = w[static_cast<std::size_t>(j)];
  }
  const Projection proj = learn_projection(Y, W, opt.target_dim, opt.ridge);
  std::vector<ClassPrototype> out = attributes.classes();
  for (ClassPrototype& c : out) c.vector = project(proj, source(c.id));
  return {PrototypeTable(std::move(out)), proj.fit_error};
}

}  // namespace zsyolo
