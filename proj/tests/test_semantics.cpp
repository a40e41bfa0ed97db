#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "zsyolo/prototypes.hpp"
#include "zsyolo/semantics.hpp"

namespace zsyolo {
namespace {

using testing::max_gram_gap;
using testing::random_matrix;
using testing::random_table;

TEST(AverageAttributes, Examples) {
  const PrototypeTable t = average_class_attributes({{0, "a", {{1, 0}, {0, 0}}}, {1, "b", {{1, 1}}}});
  EXPECT_EQ(t.at(0).vector, (std::vector<double>{0.5, 0.0}));
  EXPECT_EQ(t.at(1).vector, (std::vector<double>{1.0, 1.0}));
}

TEST(AverageAttributes, SixtyFourDimensions) {
  Rng rng(1);
  ClassInstances c{3, "x", {}};
  for (int i = 0; i < 10; ++i) {
    std::vector<double> v(64);
    for (double& x : v) x = rng.uniform() < 0.5 ? 1.0 : 0.0;
    c.instances.push_back(v);
  }
  const PrototypeTable t = average_class_attributes({c});
  EXPECT_EQ(t.dim(), 64u);
  for (double v : t.at(3).vector) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  std::reverse(c.instances.begin(), c.instances.end());
  EXPECT_EQ(average_class_attributes({c}), t);
}

TEST(AverageAttributes, EmptyClassRejected) {
  EXPECT_THROW(average_class_attributes({{0, "a", {}}}), std::invalid_argument);
}

TEST(PrototypeTable, Validation) {
  EXPECT_THROW(PrototypeTable({{0, "a", {1, 0}, true}, {0, "b", {0, 1}, true}}), std::invalid_argument);
  EXPECT_THROW(PrototypeTable({{0, "a", {1, 0}, true}, {1, "b", {0, 1, 0}, true}}), std::invalid_argument);
  EXPECT_THROW(PrototypeTable({{0, "a", {1, 0}, false}}), std::invalid_argument);
}

TEST(SyntheticPrototypes, OneHotOrthogonal) {
  const PrototypeTable t = synthetic_prototypes(PrototypeMode::onehot, 3, 3, 0);
  for (ClassId a = 0; a < 3; ++a)
    for (ClassId b = 0; b < 3; ++b)
      EXPECT_EQ(cosine_similarity(t.at(a).vector, t.at(b).vector), a == b ? 1.0 : 0.0);
  EXPECT_THROW(synthetic_prototypes(PrototypeMode::onehot, 3, 4, 0), std::invalid_argument);
}

TEST(SyntheticPrototypes, RandomDimensionRangeAndDeterminism) {
  const PrototypeTable t = synthetic_prototypes(PrototypeMode::random, 5, 64, 9);
  EXPECT_EQ(t.dim(), 64u);
  for (const ClassPrototype& c : t.classes())
    for (double v : c.vector) {
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  EXPECT_EQ(t, synthetic_prototypes(PrototypeMode::random, 5, 64, 9));
  EXPECT_FALSE(t == synthetic_prototypes(PrototypeMode::random, 5, 64, 10));
}

TEST(LearnProjection, IdentityAlignment) {
  Rng rng(2);
  const Eigen::MatrixXd Y = random_matrix(4, 6, rng);
  const Projection p = learn_projection(Y, Y, 4, 0.0);
  EXPECT_LT(p.fit_error, 1e-8);
}

TEST(LearnProjection, PaperShape) {
  Rng rng(3);
  const Eigen::MatrixXd Y = random_matrix(20, 64, rng);
  const Eigen::MatrixXd W = random_matrix(20, 300, rng);
  const Projection p = learn_projection(Y, W, 25);
  EXPECT_EQ(p.P.rows(), 25);
  EXPECT_EQ(p.P.cols(), 300);
  EXPECT_GE(p.fit_error, 0.0);
}

TEST(LearnProjection, ExactRecovery) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(10 + seed);
    const Eigen::MatrixXd Y = random_matrix(6, 5, rng);
    const Eigen::MatrixXd W = random_matrix(6, 10, rng);
    const Projection p = learn_projection(Y, W, 6, 1e-8);
    EXPECT_LT(max_gram_gap(p, Y, W), 1e-6) << "seed " << seed;
  }
}

TEST(LearnProjection, FitErrorNonIncreasingInTargetDim) {
  Rng rng(4);
  const Eigen::MatrixXd Y = random_matrix(10, 8, rng);
  const Eigen::MatrixXd W = random_matrix(10, 12, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t d = 2; d <= 8; ++d) {
    const double e = learn_projection(Y, W, d).fit_error;
    EXPECT_LE(e, prev) << "h' = " << d;
    prev = e;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(LearnProjection, SingularWithoutRidgeRejected) {
  Rng rng(5);
  const Eigen::MatrixXd Y = random_matrix(6, 4, rng);
  const Eigen::MatrixXd W = random_matrix(6, 3, rng);
  try {
    learn_projection(Y, W, 3, 0.0);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  EXPECT_NO_THROW(learn_projection(Y, W, 3, 1e-3));
}

TEST(LearnProjection, Deterministic) {
  Rng rng(6);
  const Eigen::MatrixXd Y = random_matrix(8, 6, rng);
  const Eigen::MatrixXd W = random_matrix(8, 20, rng);
  const Projection a = learn_projection(Y, W, 5), b = learn_projection(Y, W, 5);
  EXPECT_TRUE(a.P == b.P);
}

TEST(Project, Examples) {
  Projection p;
  p.P = Eigen::MatrixXd::Identity(3, 3);
  p.source_dim = p.target_dim = 3;
  const std::vector<double> w = {1.5, -2.0, 0.25};
  EXPECT_EQ(project(p, w), w);
  EXPECT_EQ(project(p, std::vector<double>(3, 0.0)), std::vector<double>(3, 0.0));
  EXPECT_THROW(project(p, std::vector<double>(4, 0.0)), std::invalid_argument);
}

TEST(Project, GramResidualMatchesFitError) {
  Rng rng(7);
  const Eigen::MatrixXd Y = random_matrix(9, 7, rng);
  const Eigen::MatrixXd W = random_matrix(9, 15, rng);
  const Projection p = learn_projection(Y, W, 3);
  double sq = 0.0;
  std::vector<std::vector<double>> z;
  for (Eigen::Index i = 0; i < 9; ++i) {
    std::vector<double> w(15);
    for (Eigen::Index j = 0; j < 15; ++j) w[static_cast<std::size_t>(j)] = W(i, j);
    z.push_back(project(p, w));
  }
  for (Eigen::Index i = 0; i < 9; ++i)
    for (Eigen::Index j = 0; j < 9; ++j) {
      const double r = dot(z[i], z[j]) - Y.row(i).dot(Y.row(j));
      sq += r * r;
    }
  EXPECT_NEAR(std::sqrt(sq), p.fit_error, 1e-9 * std::max(1.0, p.fit_error));
}

PrototypeTable table_of(std::vector<std::vector<double>> seen, std::vector<std::vector<double>> unseen) {
  std::vector<ClassPrototype> c;
  ClassId id = 0;
  for (auto& v : seen) c.push_back({id++, "s", v, true});
  for (auto& v : unseen) c.push_back({id++, "u", v, false});
  return PrototypeTable(std::move(c));
}

TEST(EnergyScore, Examples) {
  EXPECT_DOUBLE_EQ(energy_score(table_of({{1, 0}, {0, 1}}, {{2, 0}})), 1.0);
  EXPECT_EQ(energy_score(table_of({{1, 0, 0}, {0, 1, 0}}, {{0, 0, 3}})), 0.0);
  // seen similarities 0.5 and 0.8 for the unseen unit vector (1,0)
  EXPECT_NEAR(energy_score(table_of({{0.5, std::sqrt(0.75)}, {0.8, 0.6}}, {{1, 0}})), 0.8, 1e-15);
  EXPECT_THROW(energy_score(table_of({{1, 0}}, {})), std::invalid_argument);
}

TEST(EnergyScore, ScaleInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const PrototypeTable t = random_table(8, 5, 6, rng);
    std::vector<ClassPrototype> c = t.classes();
    for (double& v : c[rng.index(c.size())].vector) v *= 7.5;
    EXPECT_NEAR(energy_score(PrototypeTable(c)), energy_score(t), 1e-12);
  }
}

TEST(NnClassify, Examples) {
  std::vector<ClassPrototype> c;
  Rng rng(9);
  for (ClassId id = 0; id < 10; ++id) {
    std::vector<double> v(10, 0.0);
    v[static_cast<std::size_t>(id)] = 1.0;
    v[(static_cast<std::size_t>(id) + 1) % 10] = 0.02;
    c.push_back({id, "c", v, true});
  }
  const PrototypeTable t(c);
  EXPECT_EQ(nn_classify(t.at(7).vector, t).class_id, 7);
  std::vector<double> mix(10);
  for (std::size_t i = 0; i < 10; ++i) mix[i] = 0.9 * t.at(3).vector[i] + 0.1 * t.at(8).vector[i];
  EXPECT_EQ(nn_classify(mix, t).class_id, 3);
}

TEST(NnClassify, TieGoesToLowestId) {
  std::vector<ClassPrototype> c = {{5, "five", {1, 1}, true}, {2, "two", {1, 1}, true}};
  EXPECT_EQ(nn_classify(std::vector<double>{0.3, 0.3}, PrototypeTable(c)).class_id, 2);
}

TEST(NnClassify, ZeroPredictionDegenerate) {
  const PrototypeTable t = table_of({{1, 0}, {0, 1}}, {{1, 1}});
  const Recognition r = nn_classify(std::vector<double>{0, 0}, t, Restrict::all);
  EXPECT_EQ(r.class_id, 0);
  EXPECT_EQ(r.similarity, 0.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(nn_classify(std::vector<double>{0, 0}, t, Restrict::unseen).class_id, 2);
}

TEST(NnClassify, Restrict) {
  const PrototypeTable t = table_of({{1, 0}}, {{0.9, 0.1}});
  EXPECT_EQ(nn_classify(std::vector<double>{0.9, 0.1}, t, Restrict::all).class_id, 1);
  EXPECT_EQ(nn_classify(std::vector<double>{0.9, 0.1}, t, Restrict::seen).class_id, 0);
  EXPECT_THROW(nn_classify(std::vector<double>{1, 0, 0}, t), std::invalid_argument);
}

TEST(NnClassify, PrototypeRecognizesItself) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const PrototypeTable t = random_table(12, 12, 8, rng);
    for (const ClassPrototype& c : t.classes()) EXPECT_EQ(nn_classify(c.vector, t).class_id, c.id);
  }
}


// ---------------------------------------------------------------------------
// build_prototypes

TEST(BuildPrototypes, ModesKeepIdsAndFlags) {
  Rng rng(60);
  const PrototypeTable attrs = random_table(6, 4, 5, rng);
  for (PrototypeMode m : {PrototypeMode::attributes, PrototypeMode::onehot, PrototypeMode::random}) {
    const PrototypeTable t = build_prototypes(attrs, {m, 3}).table;
    ASSERT_EQ(t.size(), 6u);
    EXPECT_EQ(t.dim(), m == PrototypeMode::onehot ? 6u : 5u);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(t.classes()[i].id, attrs.classes()[i].id);
      EXPECT_EQ(t.classes()[i].seen, attrs.classes()[i].seen);
    }
  }
}

TEST(BuildPrototypes, ReducedEmbeddingIgnoresUnseenSources) {
  Rng rng(61);
  const PrototypeTable attrs = random_table(6, 4, 5, rng);
  Embeddings emb = synthetic_embeddings(attrs, 9, 1);
  PrototypeOptions opt{PrototypeMode::w2vR, 0, &emb, 4};
  const PrototypeBuild a = build_prototypes(attrs, opt);
  for (double& v : emb.vectors[5].vector) v += 1.0;  // class 5 is unseen
  const PrototypeBuild b = build_prototypes(attrs, opt);
  EXPECT_EQ(a.fit_error, b.fit_error);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.table.classes()[i].vector, b.table.classes()[i].vector);
  EXPECT_NE(a.table.classes()[5].vector, b.table.classes()[5].vector);
}

TEST(BuildPrototypes, NormalizedEmbeddingsIgnoreScale) {
  Rng rng(62);
  const PrototypeTable attrs = random_table(6, 4, 5, rng);
  Embeddings emb = synthetic_embeddings(attrs, 9, 2);
  PrototypeOptions opt{PrototypeMode::w2vR, 0, &emb, 4};
  opt.normalize_embeddings = true;
  const PrototypeBuild a = build_prototypes(attrs, opt);
  for (double& v : emb.vectors[2].vector) v *= 3.0;
  const PrototypeBuild b = build_prototypes(attrs, opt);
  EXPECT_NEAR(a.fit_error, b.fit_error, 1e-9);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(a.table.classes()[i].vector[j], b.table.classes()[i].vector[j], 1e-9);
}

TEST(BuildPrototypes, ReducedEmbeddingNeedsSource) {
  Rng rng(63);
  EXPECT_THROW(build_prototypes(random_table(4, 3, 5, rng), {PrototypeMode::w2vR, 0}), std::invalid_argument);
}

}  // namespace
}  // namespace zsyolo
