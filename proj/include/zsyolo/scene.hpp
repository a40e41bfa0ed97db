#pragma once

// Synthetic attributed-shapes scenes.
//
// Attribute bits, in order: angular, curved, filled, elongated, lobed, and
// the R, G, B bits of the class colour. Boxes are pixel center-format until
// converted with pixel_to_grid.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsyolo/box.hpp"
#include "zsyolo/rng.hpp"
#include "zsyolo/semantics.hpp"
#include "zsyolo/tensor.hpp"

namespace zsyolo {

enum class ShapeKind { square, bar, frame, triangle, star, cross, circle, ellipse, ring, flower, arc };

inline constexpr std::size_t kAttributeDim = 8;
inline const std::array<const char*, kAttributeDim> kAttributeNames = {"angular", "curved", "filled", "elongated",
                                                                       "lobed",   "red",    "green",  "blue"};

struct ClassDef {
  ClassId id = 0;
  std::string name;
  ShapeKind shape = ShapeKind::square;
  std::array<double, 3> color{};
  std::vector<double> attributes;
};

/// Long-to-short side ratio of a shape; 1 for compact shapes.
inline double shape_aspect(ShapeKind k) {
  switch (k) {
    case ShapeKind::bar: return 2.6;
    case ShapeKind::ellipse:
    case ShapeKind::cross:
    case ShapeKind::arc: return 2.0;
    default: return 1.0;
  }
}

namespace detail {

inline std::vector<double> attribute_bits(const std::string& flags) {
  std::vector<double> v(kAttributeDim, 0.0);
  for (char f : flags) {
    switch (f) {
      case 'A': v[0] = 1; break;
      case 'C': v[1] = 1; break;
      case 'F': v[2] = 1; break;
      case 'E': v[3] = 1; break;
      case 'L': v[4] = 1; break;
      case 'R': v[5] = 1; break;
      case 'G': v[6] = 1; break;
      case 'B': v[7] = 1; break;
      default: throw std::logic_error("bad attribute flag");
    }
  }
  return v;
}

struct StarPolygon {
  std::array<double, 20> xy{};
  StarPolygon() {
    double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
    for (int i = 0; i < 10; ++i) {
      const double r = i % 2 == 0 ? 1.0 : 0.45;
      const double t = (-90.0 + 36.0 * i) * std::numbers::pi / 180.0;
      xy[2 * i] = r * std::cos(t);
      xy[2 * i + 1] = r * std::sin(t);
      lo_x = std::min(lo_x, xy[2 * i]);
      hi_x = std::max(hi_x, xy[2 * i]);
      lo_y = std::min(lo_y, xy[2 * i + 1]);
      hi_y = std::max(hi_y, xy[2 * i + 1]);
    }
    for (int i = 0; i < 10; ++i) {
      xy[2 * i] = -1.0 + 2.0 * (xy[2 * i] - lo_x) / (hi_x - lo_x);
      xy[2 * i + 1] = -1.0 + 2.0 * (xy[2 * i + 1] - lo_y) / (hi_y - lo_y);
    }
  }
  bool contains(double u, double v) const {
    bool in = false;
    for (int i = 0, j = 9; i < 10; j = i++) {
      const double xi = xy[2 * i], yi = xy[2 * i + 1], xj = xy[2 * j], yj = xy[2 * j + 1];
      if ((yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi) in = !in;
    }
    return in;
  }
};

inline const StarPolygon& star_polygon() {
  static const StarPolygon p;
  return p;
}

}  // namespace detail

/// Whether local point (u, v) in [-1,1]^2 lies inside the shape. Every shape
/// reaches all four sides of that square, so its box is the frame itself.
inline bool shape_contains(ShapeKind k, double u, double v) {
  if (std::abs(u) > 1.0 || std::abs(v) > 1.0) return false;
  const double r2 = u * u + v * v;
  switch (k) {
    case ShapeKind::square:
    case ShapeKind::bar: return true;
    case ShapeKind::frame: return std::abs(u) >= 0.55 || std::abs(v) >= 0.55;
    case ShapeKind::triangle: return std::abs(u) <= (v + 1.0) / 2.0;
    case ShapeKind::star: return detail::star_polygon().contains(u, v);
    case ShapeKind::cross: return std::abs(u) <= 0.3 || std::abs(v) <= 0.3;
    case ShapeKind::circle:
    case ShapeKind::ellipse: return r2 <= 1.0;
    case ShapeKind::ring: return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    case ShapeKind::flower: {
      auto disc = [&](double cu, double cv) { return (u - cu) * (u - cu) + (v - cv) * (v - cv) <= 0.25; };
      return disc(0.5, 0) || disc(-0.5, 0) || disc(0, 0.5) || disc(0, -0.5);
    }
    case ShapeKind::arc: {
      const double q = u * u + (v - 1.0) * (v - 1.0) / 4.0;
      return q <= 1.0 && q >= 0.45 * 0.45;
    }
  }
  return false;
}

/// The default 16-class library: eight angular warm-coloured shapes and
/// eight curved cool-coloured ones, ids 0..15.
inline std::vector<ClassDef> default_class_library() {
  struct Row {
    const char* name;
    ShapeKind shape;
    const char* flags;
  };
  static const Row rows[] = {
      {"red_square", ShapeKind::square, "AFR"},        {"yellow_bar", ShapeKind::bar, "AFERG"},
      {"red_star", ShapeKind::star, "AFLR"},           {"red_frame", ShapeKind::frame, "AR"},
      {"yellow_cross", ShapeKind::cross, "AFELRG"},    {"yellow_triangle", ShapeKind::triangle, "AFRG"},
      {"red_bar", ShapeKind::bar, "AFER"},             {"yellow_frame", ShapeKind::frame, "ARG"},
      {"blue_circle", ShapeKind::circle, "CFB"},       {"cyan_ellipse", ShapeKind::ellipse, "CFEGB"},
      {"green_ring", ShapeKind::ring, "CG"},           {"blue_flower", ShapeKind::flower, "CFLB"},
      {"cyan_ring", ShapeKind::ring, "CGB"},           {"green_circle", ShapeKind::circle, "CFG"},
      {"blue_arc", ShapeKind::arc, "CEB"},             {"green_arc", ShapeKind::arc, "CEG"},
  };
  std::vector<ClassDef> out;
  ClassId id = 0;
  for (const Row& r : rows) {
    ClassDef c;
    c.id = id++;
    c.name = r.name;
    c.shape = r.shape;
    c.attributes = detail::attribute_bits(r.flags);
    for (int ch = 0; ch < 3; ++ch) c.color[ch] = c.attributes[5 + ch] > 0.0 ? 0.88 : 0.12;
    out.push_back(std::move(c));
  }
  return out;
}

/// Prototype table of class attribute vectors, all flagged seen.
inline PrototypeTable attribute_table(std::span<const ClassDef> library) {
  std::vector<ClassPrototype> out;
  for (const ClassDef& c : library) out.push_back({c.id, c.name, c.attributes, true});
  return PrototypeTable(std::move(out));
}

struct SceneConfig {
  std::size_t image_size = 112;
  std::size_t max_objects = 4;
  double min_box = 16.0;  // pixels, geometric mean of the two sides
  double max_box = 40.0;
  double overlap_cap = 0.4;
  std::size_t clutter = 0;  // maximum number of neutral distractor blobs

  void validate() const {
    if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
    if (max_objects < 1) throw std::invalid_argument("max_objects must be at least 1");
    if (!(min_box > 0.0 && min_box <= max_box)) throw std::invalid_argument("need 0 < min_box <= max_box");
    if (max_box * std::sqrt(shape_aspect(ShapeKind::bar)) > static_cast<double>(image_size)) {
      throw std::invalid_argument("max_box too large for the image");
    }
    if (!(overlap_cap >= 0.0 && overlap_cap <= 1.0)) throw std::invalid_argument("overlap_cap must lie in [0, 1]");
  }
};

struct Scene {
  std::size_t id = 0;
  std::string file;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<GroundTruth> objects;  // pixel units
  Tensor image;                      // 3 x height x width in [0,1]; empty until loaded

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Per-pixel coverage (4x4 supersampled) of a shape filling `box`.
/// `vertical` turns an elongated shape on its side.
inline std::vector<double> shape_coverage(ShapeKind k, const Box& box, bool vertical, std::size_t n) {
  std::vector<double> cov(n * n, 0.0);
  const long x0 = std::max(0L, static_cast<long>(std::floor(box.left())));
  const long x1 = std::min(static_cast<long>(n) - 1, static_cast<long>(std::ceil(box.right())));
  const long y0 = std::max(0L, static_cast<long>(std::floor(box.top())));
  const long y1 = std::min(static_cast<long>(n) - 1, static_cast<long>(std::ceil(box.bottom())));
  for (long py = y0; py <= y1; ++py) {
    for (long px = x0; px <= x1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
          const double x = static_cast<double>(px) + (sx + 0.5) / 4.0;
          const double y = static_cast<double>(py) + (sy + 0.5) / 4.0;
          double u = (x - box.x) / (0.5 * box.w), v = (y - box.y) / (0.5 * box.h);
          if (vertical) std::swap(u, v);
          hits += shape_contains(k, u, v) ? 1 : 0;
        }
      }
      cov[static_cast<std::size_t>(py) * n + static_cast<std::size_t>(px)] = hits / 16.0;
    }
  }
  return cov;
}

namespace detail {

inline double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

inline void paint(Tensor& img, const std::vector<double>& cov, const std::array<double, 3>& color, double alpha) {
  const std::size_t plane = cov.size();
  for (std::size_t i = 0; i < plane; ++i) {
    const double a = alpha * cov[i];
    if (a == 0.0) continue;
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + i] = (1.0 - a) * img[c * plane + i] + a * color[c];
  }
}

}  // namespace detail

/// Renders 1..max_objects shapes from `pool` on a textured background.
/// Deterministic in `seed`; the image is quantized to 8 bits.
inline Scene generate_scene(std::uint64_t seed, std::span<const ClassDef> pool, const SceneConfig& config) {
  if (pool.empty()) throw std::invalid_argument("generate_scene: class pool is empty");
  config.validate();
  Rng rng(seed);
  const std::size_t n = config.image_size;
  const double N = static_cast<double>(n);
  Scene scene;
  scene.width = scene.height = n;
  scene.image = Tensor({3, n, n});

  // background: tinted grey, a low-frequency texture and pixel noise
  const double base = rng.uniform(0.3, 0.6);
  std::array<double, 3> tint{};
  for (double& t : tint) t = base + rng.uniform(-0.04, 0.04);
  const double fx = rng.uniform(0.08, 0.35), fy = rng.uniform(0.08, 0.35);
  const double phx = rng.uniform(0.0, 6.3), phy = rng.uniform(0.0, 6.3);
  const double amp = rng.uniform(0.02, 0.08);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double tex = amp * std::sin(fx * static_cast<double>(x) + phx) * std::sin(fy * static_cast<double>(y) + phy);
      for (std::size_t c = 0; c < 3; ++c) scene.image[(c * n + y) * n + x] = tint[c] + tex + rng.uniform(-0.03, 0.03);
    }
  }

  const std::size_t clutter = config.clutter == 0 ? 0 : rng.index(config.clutter + 1);
  for (std::size_t i = 0; i < clutter; ++i) {
    const double s = rng.uniform(6.0, 18.0);
    const Box b{rng.uniform(s / 2, N - s / 2), rng.uniform(s / 2, N - s / 2), s * rng.uniform(0.7, 1.4), s};
    const double g = rng.uniform(0.2, 0.75);
    const std::array<double, 3> col = {g + rng.uniform(-0.05, 0.05), g + rng.uniform(-0.05, 0.05),
                                       g + rng.uniform(-0.05, 0.05)};
    detail::paint(scene.image, shape_coverage(ShapeKind::circle, b, false, n), col, 0.7);
  }

  const std::size_t want = 1 + rng.index(config.max_objects);
  for (std::size_t i = 0; i < want; ++i) {
    const ClassDef& cls = pool[rng.index(pool.size())];
    const double aspect = shape_aspect(cls.shape);
    const bool vertical = aspect > 1.0 && rng.uniform() < 0.5;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double s = std::exp(rng.uniform(std::log(config.min_box), std::log(config.max_box)));
      double w = s * std::sqrt(aspect), h = s / std::sqrt(aspect);
      if (vertical) std::swap(w, h);
      const Box b{rng.uniform(w / 2, N - w / 2), rng.uniform(h / 2, N - h / 2), w, h};
      bool ok = true;
      for (const GroundTruth& o : scene.objects) ok = ok && iou(o.box, b) <= config.overlap_cap;
      if (!ok) continue;
      std::array<double, 3> col = cls.color;
      for (double& c : col) c = std::clamp(c + rng.uniform(-0.08, 0.08), 0.0, 1.0);
      detail::paint(scene.image, shape_coverage(cls.shape, b, vertical, n), col, 1.0);
      scene.objects.push_back({b, cls.id, cls.attributes});
      break;
    }
  }
  for (double& v : scene.image.values()) v = detail::quantize8(v);
  return scene;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSet {
  PrototypeTable classes;  // seen flags mark the split
  std::vector<Scene> train;
  std::vector<Scene> test_seen;
  std::vector<Scene> test_unseen;
  std::vector<Scene> test_mix;

  std::size_t h() const { return classes.dim(); }
  friend bool operator==(const SplitSet&, const SplitSet&) = default;
};

struct SplitFractions {
  double train = 0.8;  // share of seen-only scenes that go to train
  std::uint64_t seed = 0;
};

/// Routes scenes by content: seen-only scenes are shuffled and divided
/// between train and test_seen, unseen-only go to test_unseen, the rest to
/// test_mix. `classes` supplies vectors; its seen flags are overwritten.
inline SplitSet build_splits(std::vector<Scene> scenes, const PrototypeTable& classes, std::span<const ClassId> seen,
                             std::span<const ClassId> unseen, const SplitFractions& fractions = {}) {
  const std::set<ClassId> s(seen.begin(), seen.end()), u(unseen.begin(), unseen.end());
  for (ClassId id : s)
    if (u.count(id)) throw std::invalid_argument("class " + std::to_string(id) + " is both seen and unseen");
  if (!(fractions.train >= 0.0 && fractions.train <= 1.0)) throw std::invalid_argument("train fraction must lie in [0, 1]");
  SplitSet out;
  out.classes = classes.with_unseen(unseen);
  std::vector<Scene> seen_only;
  for (Scene& sc : scenes) {
    bool has_seen = false, has_unseen = false;
    for (const GroundTruth& o : sc.objects) {
      if (s.count(o.class_id)) {
        has_seen = true;
      } else if (u.count(o.class_id)) {
        has_unseen = true;
      } else {
        throw std::invalid_argument("scene " + std::to_string(sc.id) + " contains class " +
                                    std::to_string(o.class_id) + ", which is neither seen nor unseen");
      }
    }
    if (has_seen && has_unseen) {
      out.test_mix.push_back(std::move(sc));
    } else if (has_unseen) {
      out.test_unseen.push_back(std::move(sc));
    } else {
      seen_only.push_back(std::move(sc));
    }
  }
  Rng rng(fractions.seed);
  rng.shuffle(seen_only.begin(), seen_only.end());
  const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(seen_only.size())));
  for (std::size_t i = 0; i < seen_only.size(); ++i) (i < n_train ? out.train : out.test_seen).push_back(std::move(seen_only[i]));
  auto by_id = [](const Scene& a, const Scene& b) { return a.id < b.id; };
  std::sort(out.train.begin(), out.train.end(), by_id);
  std::sort(out.test_seen.begin(), out.test_seen.end(), by_id);
  return out;
}

struct DatasetConfig {
  SceneConfig scene;
  std::size_t seen_scenes = 250;  // split between train and test_seen
  std::size_t unseen_scenes = 60;
  std::size_t mix_scenes = 40;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

/// Generates and routes a full dataset for the given unseen classes.
/// Scene ids are consecutive; files are images/<id>.ppm.
inline SplitSet generate_dataset(std::span<const ClassDef> library, std::span<const ClassId> unseen,
                                 const DatasetConfig& config) {
  std::vector<ClassDef> seen_pool, unseen_pool;
  std::vector<ClassId> seen_ids;
  for (const ClassDef& c : library) {
    if (std::find(unseen.begin(), unseen.end(), c.id) != unseen.end()) {
      unseen_pool.push_back(c);
    } else {
      seen_pool.push_back(c);
      seen_ids.push_back(c.id);
    }
  }
  if (seen_pool.empty()) throw std::invalid_argument("generate_dataset: no seen classes");
  if (unseen_pool.empty() && (config.unseen_scenes > 0 || config.mix_scenes > 0)) {
    throw std::invalid_argument("generate_dataset: unseen or mixed scenes requested without unseen classes");
  }
  if (config.mix_scenes > 0 && config.scene.max_objects < 2) {
    throw std::invalid_argument("generate_dataset: mixed scenes need max_objects >= 2");
  }
  std::vector<Scene> scenes;
  std::uint64_t stream = 0;
  auto add = [&](Scene sc) {
    sc.id = scenes.size();
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.ppm", sc.id);
    sc.file = name;
    scenes.push_back(std::move(sc));
  };
  for (std::size_t i = 0; i < config.seen_scenes; ++i) add(generate_scene(derive_seed(config.seed, stream++), seen_pool, config.scene));
  for (std::size_t i = 0; i < config.unseen_scenes; ++i)
    add(generate_scene(derive_seed(config.seed, stream++), unseen_pool, config.scene));
  const std::vector<ClassDef> all(library.begin(), library.end());
  for (std::size_t i = 0; i < config.mix_scenes; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("generate_dataset: could not sample a mixed scene");
      Scene sc = generate_scene(derive_seed(config.seed, stream++), all, config.scene);
      bool s = false, u = false;
      for (const GroundTruth& o : sc.objects) {
        const bool is_unseen = std::find(unseen.begin(), unseen.end(), o.class_id) != unseen.end();
        u = u || is_unseen;
        s = s || !is_unseen;
      }
      if (s && u) {
        add(std::move(sc));
        break;
      }
    }
  }
  return build_splits(std::move(scenes), attribute_table(library), seen_ids, unseen, config.fractions);
}

struct RankedSplit {
  std::vector<ClassId> unseen;
  double energy = 0.0;
};

/// Candidate seen/unseen partitions scored by energy_score, highest first.
/// All C(n, n_unseen) partitions are scored when there are at most
/// `candidates` of them; otherwise `candidates` distinct ones are sampled.
inline std::vector<RankedSplit> rank_splits_by_energy(const PrototypeTable& table, std::size_t n_unseen,
                                                      std::size_t candidates, std::uint64_t seed) {
  const std::size_t n = table.size();
  if (n_unseen == 0 || n_unseen >= n) {
    throw std::invalid_argument("rank_splits_by_energy: need 0 < n_unseen < " + std::to_string(n) + " classes");
  }
  std::vector<ClassId> ids;
  for (const ClassPrototype& c : table.classes()) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());

  double total = 1.0;  // C(n, n_unseen), saturating
  for (std::size_t i = 0; i < n_unseen; ++i) total = total * static_cast<double>(n - i) / static_cast<double>(i + 1);

  std::set<std::vector<ClassId>> picked;
  if (total <= static_cast<double>(candidates)) {
    std::vector<bool> mask(n, false);
    std::fill(mask.end() - static_cast<long>(n_unseen), mask.end(), true);
    do {
      std::vector<ClassId> u;
      for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) u.push_back(ids[i]);
      picked.insert(u);
    } while (std::next_permutation(mask.begin(), mask.end()));
  } else {
    Rng rng(seed);
    while (picked.size() < candidates) {
      std::vector<ClassId> perm = ids;
      rng.shuffle(perm.begin(), perm.end());
      perm.resize(n_unseen);
      std::sort(perm.begin(), perm.end());
      picked.insert(perm);
    }
  }
  std::vector<RankedSplit> out;
  for (const auto& u : picked) out.push_back({u, energy_score(table.with_unseen(u))});
  std::stable_sort(out.begin(), out.end(), [](const RankedSplit& a, const RankedSplit& b) { return a.energy > b.energy; });
  return out;
}

// ---------------------------------------------------------------------------
// Grid conversion

/// Pixel center-format box to grid units (scale S / N). A center landing
/// exactly on a cell boundary is nudged by +1e-6 so that it lies strictly
/// inside a cell.
inline Box pixel_to_grid(const Box& px, const GridSpec& grid) {
  const double k = static_cast<double>(grid.S) / static_cast<double>(grid.image_size);
  Box g{px.x * k, px.y * k, px.w * k, px.h * k};
  if (g.x == std::floor(g.x)) g.x += 1e-6;
  if (g.y == std::floor(g.y)) g.y += 1e-6;
  return g;
}

inline Box grid_to_pixel(const Box& g, const GridSpec& grid) {
  const double k = static_cast<double>(grid.image_size) / static_cast<double>(grid.S);
  return {g.x * k, g.y * k, g.w * k, g.h * k};
}

inline std::vector<GroundTruth> objects_in_grid(const Scene& scene, const GridSpec& grid) {
  if (scene.width != grid.image_size || scene.height != grid.image_size) {
    throw std::invalid_argument("scene " + std::to_string(scene.id) + " is " + std::to_string(scene.width) + "x" +
                                std::to_string(scene.height) + ", model expects " + std::to_string(grid.image_size));
  }
  std::vector<GroundTruth> out = scene.objects;
  for (GroundTruth& g : out) g.box = pixel_to_grid(g.box, grid);
  return out;
}

// ---------------------------------------------------------------------------
// PPM images

inline void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm expects a 3 x H x W image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        row[x * 3 + c] = static_cast<unsigned char>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  auto skip = [&] {
    while (true) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
  };
  in >> magic;
  skip();
  in >> w;
  skip();
  in >> h;
  skip();
  in >> maxval;
  if (!in || magic != "P6" || w == 0 || h == 0 || maxval != 255) throw std::runtime_error(path + ": not an 8-bit P6 image");
  in.get();
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw std::runtime_error(path + ": truncated pixel data");
  Tensor img({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = bytes[(y * w + x) * 3 + c] / 255.0;
  return img;
}

}  // namespace zsyolo
