#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "zsyolo/model.hpp"

namespace zsyolo {
namespace {

using testing::random_tensor;

ModelConfig paper_shape_config() {
  ModelConfig c;
  c.grid = {13, 5, std::vector<Anchor>(5, Anchor{1.0, 1.0}), 416};
  c.h = 64;
  c.feature_channels = 64;
  c.backbone = default_backbone(416, 13, 64);
  return c;
}

TEST(BuildModel, PaperShapeHeadChannels) {
  const Model m(paper_shape_config());
  EXPECT_EQ(m.semantic_head().weight.dim(0), 320u);
  EXPECT_EQ(m.localization_head().weight.dim(0), 20u);
  EXPECT_EQ(m.confidence_head().weight.dim(0), 5u);
}

TEST(BuildModel, PaperShapeForward) {
  const Model m(paper_shape_config());
  Rng rng(1);
  Graph g;
  const HeadOutputs out = m.forward(g, random_tensor({3, 416, 416}, rng, 0.0, 1.0));
  EXPECT_EQ(out.offsets.shape(), (Shape{20, 13, 13}));
  EXPECT_EQ(out.semantics.shape(), (Shape{320, 13, 13}));
  EXPECT_EQ(out.confidence.shape(), (Shape{5, 13, 13}));
}

TEST(BuildModel, SameSeedSameParameters) {
  ModelConfig c = desk_config();
  c.seed = 17;
  const Model a(c), b(c);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
  c.seed = 18;
  const Model other(c);
  EXPECT_FALSE(*other.parameters()[0] == *pa[0]);
}

TEST(BuildModel, RejectsInconsistentChannels) {
  ModelConfig c = desk_config();
  c.feature_channels = 32;
  EXPECT_THROW(Model{c}, std::invalid_argument);
  c = desk_config();
  c.grid.S = 6;
  EXPECT_THROW(Model{c}, std::invalid_argument);
  c = desk_config();
  c.grid.priors.pop_back();
  EXPECT_THROW(Model{c}, std::invalid_argument);
}

TEST(BuildModel, DeskBackbone) {
  const auto layers = desk_config().backbone;
  ASSERT_EQ(layers.size(), 5u);
  EXPECT_EQ(layers.back().out_channels, 64u);
  std::size_t side = 112;
  for (const LayerSpec& l : layers) side = conv_out_extent(side, 3, l.stride, 1);
  EXPECT_EQ(side, 7u);
}

TEST(Forward, DeskShapes) {
  const Model m(desk_config());
  Rng rng(2);
  Graph g;
  const HeadOutputs out = m.forward(g, random_tensor({3, 112, 112}, rng, 0.0, 1.0));
  EXPECT_EQ(out.features.shape(), (Shape{64, 7, 7}));
  EXPECT_EQ(out.offsets.shape(), (Shape{12, 7, 7}));
  EXPECT_EQ(out.semantics.shape(), (Shape{24, 7, 7}));
  EXPECT_EQ(out.confidence.shape(), (Shape{3, 7, 7}));
}

TEST(Forward, WrongImageShapeRejected) {
  const Model m(desk_config());
  Graph g;
  EXPECT_THROW(m.forward(g, Tensor({3, 64, 64})), ShapeError);
  EXPECT_THROW(m.forward(g, Tensor({1, 112, 112})), ShapeError);
}

TEST(Forward, AblationInputChannels) {
  ModelConfig c = desk_config();
  c.ablation = AblationMode::visual;
  EXPECT_EQ(Model(c).confidence_head().weight.dim(1), 64u + 12u);
  c.ablation = AblationMode::semantic;
  EXPECT_EQ(Model(c).confidence_head().weight.dim(1), 12u + 24u);
  c.ablation = AblationMode::full;
  EXPECT_EQ(Model(c).confidence_head().weight.dim(1), 64u + 12u + 24u);
}

TEST(Forward, RandomConfigSweep) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    c.grid.S = 1 + rng.index(6);
    c.grid.A = 1 + rng.index(4);
    c.grid.priors.assign(c.grid.A, Anchor{1.0, 1.0});
    c.grid.image_size = c.grid.S << rng.index(4);
    c.h = 1 + rng.index(10);
    c.feature_channels = 4 + rng.index(12);
    c.backbone = default_backbone(c.grid.image_size, c.grid.S, c.feature_channels, 1 + rng.index(5));
    c.ablation = static_cast<AblationMode>(rng.index(3));
    c.seed = rng.next();
    const Model m(c);
    Graph g;
    const std::size_t n = c.grid.image_size, S = c.grid.S, A = c.grid.A;
    const HeadOutputs out = m.forward(g, random_tensor({3, n, n}, rng));
    ASSERT_EQ(out.features.shape(), (Shape{c.feature_channels, S, S})) << "trial " << trial;
    ASSERT_EQ(out.offsets.shape(), (Shape{4 * A, S, S})) << "trial " << trial;
    ASSERT_EQ(out.semantics.shape(), (Shape{A * c.h, S, S})) << "trial " << trial;
    ASSERT_EQ(out.confidence.shape(), (Shape{A, S, S})) << "trial " << trial;
  }
}

double semantic_grad_norm_from_confidence(AblationMode mode) {
  ModelConfig c = desk_config();
  c.ablation = mode;
  c.seed = 4;
  Model m(c);
  m.zero_grad();
  Rng rng(5);
  Graph g;
  const HeadOutputs out = m.forward(g, random_tensor({3, 112, 112}, rng, 0.0, 1.0));
  g.backward(sum(out.confidence));
  double norm = 0.0;
  for (double v : m.semantic_head().weight.grad()) norm += v * v;
  return std::sqrt(norm);
}

TEST(Forward, ConfidenceGradientReachesSemanticHeadOnlyWhenFused) {
  EXPECT_GT(semantic_grad_norm_from_confidence(AblationMode::full), 0.0);
  EXPECT_GT(semantic_grad_norm_from_confidence(AblationMode::semantic), 0.0);
  EXPECT_EQ(semantic_grad_norm_from_confidence(AblationMode::visual), 0.0);
}

TEST(Forward, ConfidenceIsRawAndDeterministic) {
  const Model m(desk_config());
  Rng rng(6);
  const Tensor img = random_tensor({3, 112, 112}, rng, 0.0, 1.0);
  Graph g1, g2;
  const Tensor a = m.forward(g1, img).confidence.value();
  const Tensor b = m.forward(g2, img).confidence.value();
  EXPECT_EQ(a, b);
}

TEST(Parameters, NamesMatchOrder) {
  Model m(desk_config());
  const auto names = m.parameter_names();
  ASSERT_EQ(names.size(), m.parameters().size());
  EXPECT_EQ(names.front(), "backbone.0.weight");
  EXPECT_EQ(names.back(), "confidence.bias");
}

TEST(DecodeAll, LayoutMatchesIndex) {
  const GridSpec grid{3, 2, {{1.0, 1.0}, {2.0, 2.0}}, 48};
  Tensor tl({8, 3, 3}, 0.0);
  tl.at(4 * 1 + 2, 2, 1) = std::log(3.0);  // anchor 1, cell (cx=1, cy=2), ow
  const auto boxes = decode_all(tl, grid);
  const Box b = boxes[grid.index(1, 2, 1)];
  EXPECT_DOUBLE_EQ(b.x, 1.5);
  EXPECT_DOUBLE_EQ(b.y, 2.5);
  EXPECT_NEAR(b.w, 6.0, 1e-12);
  EXPECT_DOUBLE_EQ(b.h, 2.0);
}

}  // namespace
}  // namespace zsyolo
