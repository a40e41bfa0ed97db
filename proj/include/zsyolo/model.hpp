#pragma once

// The detector: a stride-2 convolutional backbone producing T_F, then three
// 1x1 heads. Localization (4A channels) and semantic prediction (A*h
// channels) read T_F; the confidence head (A channels) reads the channel
// concatenation of T_F, T_L and T_S, minus whatever the ablation mode drops.
//
// Channel layout per cell: T_L channel 4a+j holds offset j (ox, oy, ow, oh)
// of anchor a; T_S channel a*h+i holds attribute i of anchor a; T_C channel a
// holds the raw confidence of anchor a. All head tensors are C x S x S.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/autodiff.hpp"
#include "zsyolo/box.hpp"
#include "zsyolo/rng.hpp"

namespace zsyolo {

enum class AblationMode { full, visual, semantic };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::visual: return "visual";
    case AblationMode::semantic: return "semantic";
  }
  return "full";
}

inline AblationMode parse_ablation(const std::string& s) {
  if (s == "full") return AblationMode::full;
  if (s == "visual") return AblationMode::visual;
  if (s == "semantic") return AblationMode::semantic;
  throw std::invalid_argument("unknown ablation mode '" + s + "' (expected full, visual or semantic)");
}

/// One 3x3 convolution block (padding 1, leaky activation).
struct LayerSpec {
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelConfig {
  GridSpec grid;
  std::size_t h = 8;
  std::size_t feature_channels = 64;
  std::vector<LayerSpec> backbone;
  AblationMode ablation = AblationMode::full;
  std::uint64_t seed = 0;

  std::size_t confidence_in_channels() const {
    const std::size_t loc = 4 * grid.A, sem = grid.A * h;
    switch (ablation) {
      case AblationMode::full: return feature_channels + loc + sem;
      case AblationMode::visual: return feature_channels + loc;
      case AblationMode::semantic: return loc + sem;
    }
    return 0;
  }

  void validate() const {
    grid.validate();
    if (h == 0) throw std::invalid_argument("semantic dimension h must be positive");
    if (feature_channels == 0) throw std::invalid_argument("feature channel count must be positive");
    if (backbone.empty()) throw std::invalid_argument("backbone has no layers");
    std::size_t side = grid.image_size;
    for (const LayerSpec& l : backbone) {
      if (l.out_channels == 0 || l.stride == 0) throw std::invalid_argument("backbone layer with zero channels or stride");
      side = conv_out_extent(side, 3, l.stride, 1);
    }
    if (side != grid.S) {
      throw std::invalid_argument("backbone maps " + std::to_string(grid.image_size) + " pixels to " +
                                  std::to_string(side) + " cells, grid expects S=" + std::to_string(grid.S));
    }
    if (backbone.back().out_channels != feature_channels) {
      throw std::invalid_argument("last backbone layer has " + std::to_string(backbone.back().out_channels) +
                                  " channels, feature_channels is " + std::to_string(feature_channels));
    }
  }
};

/// Stride-2 blocks until the map reaches S, then stride-1 blocks up to
/// `min_blocks`. Channels double from `base_channels` and cap at C_F; the last
/// block always emits C_F.
inline std::vector<LayerSpec> default_backbone(std::size_t image_size, std::size_t S, std::size_t feature_channels,
                                               std::size_t min_blocks = 5, std::size_t base_channels = 8) {
  std::vector<LayerSpec> layers;
  std::size_t side = image_size;
  std::size_t ch = base_channels;
  while (side > S) {
    layers.push_back({std::min(ch, feature_channels), 2});
    side = conv_out_extent(side, 3, 2, 1);
    ch *= 2;
  }
  if (side != S) {
    throw std::invalid_argument("image size " + std::to_string(image_size) +
                                " cannot be reduced to S=" + std::to_string(S) + " by stride-2 halving");
  }
  while (layers.size() < min_blocks) {
    layers.push_back({std::min(ch, feature_channels), 1});
    ch *= 2;
  }
  layers.back().out_channels = feature_channels;
  return layers;
}

/// Default synthetic-data configuration: 112 px input, S=7, A=3, h=8, C_F=64.
inline ModelConfig desk_config(std::vector<Anchor> priors = {{1.0, 1.0}, {1.5, 1.5}, {2.0, 2.0}}) {
  ModelConfig c;
  c.grid.S = 7;
  c.grid.A = priors.size();
  c.grid.priors = std::move(priors);
  c.grid.image_size = 112;
  c.h = 8;
  c.feature_channels = 64;
  c.backbone = default_backbone(112, 7, 64);
  return c;
}

struct HeadOutputs {
  Var features;    // T_F: C_F x S x S
  Var offsets;     // T_L: 4A x S x S
  Var semantics;   // T_S: A*h x S x S
  Var confidence;  // T_C: A x S x S, raw scores
};

class Model {
 public:
  struct Conv {
    Tensor weight;
    Tensor bias;
    std::size_t stride = 1;
    std::size_t pad = 0;
    bool leaky = true;
  };

  /// Deterministic initialization from config.seed: He-normal backbone
  /// weights, 1/sqrt(fan_in) head weights, zero biases.
  explicit Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(config_.seed);
    std::size_t in = 3;
    for (const LayerSpec& l : config_.backbone) {
      backbone_.push_back(make_conv(rng, in, l.out_channels, 3, l.stride, 1, true, std::sqrt(2.0)));
      in = l.out_channels;
    }
    const std::size_t A = config_.grid.A;
    loc_ = make_conv(rng, config_.feature_channels, 4 * A, 1, 1, 0, true, 1.0);
    sem_ = make_conv(rng, config_.feature_channels, A * config_.h, 1, 1, 0, false, 1.0);
    conf_ = make_conv(rng, config_.confidence_in_channels(), A, 1, 1, 0, false, 1.0);
  }

  const ModelConfig& config() const { return config_; }
  const GridSpec& grid() const { return config_.grid; }

  /// Parameters in declaration order: backbone layers, localization,
  /// semantic, confidence; weight before bias within a layer.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for_each_conv([&](Conv& c, const std::string&) {
      out.push_back(&c.weight);
      out.push_back(&c.bias);
    });
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (Tensor* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    const_cast<Model*>(this)->for_each_conv([&](Conv&, const std::string& name) {
      out.push_back(name + ".weight");
      out.push_back(name + ".bias");
    });
    return out;
  }

  const Conv& semantic_head() const { return sem_; }
  const Conv& confidence_head() const { return conf_; }
  const Conv& localization_head() const { return loc_; }

  void zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
  }

  /// Training forward: parameters join the tape with gradients enabled.
  HeadOutputs forward(Graph& g, const Tensor& image) { return run(g, image, *this); }
  /// Inference forward: parameters are bound read-only.
  HeadOutputs forward(Graph& g, const Tensor& image) const { return run(g, image, *this); }

 private:
  Conv make_conv(Rng& rng, std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                 bool leaky, double gain) {
    Conv c;
    c.weight = Tensor({out, in, k, k});
    const double stddev = gain / std::sqrt(static_cast<double>(in * k * k));
    for (double& v : c.weight.values()) v = stddev * rng.normal();
    c.bias = Tensor({out}, 0.0);
    c.weight.set_requires_grad(true);
    c.bias.set_requires_grad(true);
    c.stride = stride;
    c.pad = pad;
    c.leaky = leaky;
    return c;
  }

  template <class F>
  void for_each_conv(F&& f) {
    for (std::size_t i = 0; i < backbone_.size(); ++i) f(backbone_[i], "backbone." + std::to_string(i));
    f(loc_, std::string("localization"));
    f(sem_, std::string("semantic"));
    f(conf_, std::string("confidence"));
  }

  template <class Self>
  static Var apply(Graph& g, Var x, Self& conv) {
    Var y = conv2d(x, g.parameter(conv.weight), g.parameter(conv.bias), conv.stride, conv.pad);
    return conv.leaky ? leaky_relu(y) : y;
  }

  template <class Self>
  static HeadOutputs run(Graph& g, const Tensor& image, Self& self) {
    const std::size_t n = self.config_.grid.image_size;
    if (image.shape() != Shape{3, n, n}) {
      throw ShapeError("forward expects a 3x" + std::to_string(n) + "x" + std::to_string(n) + " image, got " +
                       shape_str(image.shape()));
    }
    Var x = g.constant(image);
    for (auto& layer : self.backbone_) x = apply(g, x, layer);
    HeadOutputs out;
    out.features = x;
    out.offsets = apply(g, x, self.loc_);
    out.semantics = apply(g, x, self.sem_);
    Var fused;
    switch (self.config_.ablation) {
      case AblationMode::full: fused = concat_channels({out.features, out.offsets, out.semantics}); break;
      case AblationMode::visual: fused = concat_channels({out.features, out.offsets}); break;
      case AblationMode::semantic: fused = concat_channels({out.offsets, out.semantics}); break;
    }
    out.confidence = apply(g, fused, self.conf_);
    return out;
  }

  ModelConfig config_;
  std::vector<Conv> backbone_;
  Conv loc_;
  Conv sem_;
  Conv conf_;
};

/// Offsets of anchor `a` in cell (cx, cy) read from a T_L value tensor.
inline Offsets offsets_at(const Tensor& tl, std::size_t cx, std::size_t cy, std::size_t a) {
  return {tl.at(4 * a + 0, cy, cx), tl.at(4 * a + 1, cy, cx), tl.at(4 * a + 2, cy, cx), tl.at(4 * a + 3, cy, cx)};
}

/// Decodes all S*S*A predictions, indexed by GridSpec::index.
inline std::vector<Box> decode_all(const Tensor& tl, const GridSpec& grid) {
  std::vector<Box> boxes(grid.predictions());
  for (std::size_t cy = 0; cy < grid.S; ++cy)
    for (std::size_t cx = 0; cx < grid.S; ++cx)
      for (std::size_t a = 0; a < grid.A; ++a)
        boxes[grid.index(cx, cy, a)] = decode_box(offsets_at(tl, cx, cy, a), {cx, cy}, grid.priors[a]);
  return boxes;
}

/// Semantic vector of anchor `a` in cell (cx, cy) read from a T_S value tensor.
inline std::vector<double> semantic_at(const Tensor& ts, std::size_t h, std::size_t cx, std::size_t cy,
                                       std::size_t a) {
  std::vector<double> v(h);
  for (std::size_t i = 0; i < h; ++i) v[i] = ts.at(a * h + i, cy, cx);
  return v;
}

}  // namespace zsyolo
