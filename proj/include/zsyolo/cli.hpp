#pragma once

// Subcommands behind the zsyolo executable. run_cli returns the process exit
// code: 0 success, 2 usage or configuration error, 3 training divergence.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zsyolo/checkpoint.hpp"
#include "zsyolo/manifest.hpp"
#include "zsyolo/metrics.hpp"
#include "zsyolo/prototypes.hpp"
#include "zsyolo/scene.hpp"
#include "zsyolo/train.hpp"

namespace zsyolo::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kDiverged = 3 };

/// Thrown for flag combinations the parser cannot catch on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Accepts a dataset directory or the manifest file itself.
inline fs::path manifest_path(const std::string& data) {
  const fs::path p(data);
  return fs::is_directory(p) ? p / "manifest.json" : p;
}

inline SplitSet load_data(const std::string& data) {
  const fs::path m = manifest_path(data);
  SplitSet split = load_manifest(m.string());
  load_images(split, m.parent_path().string());
  return split;
}

inline std::size_t data_image_size(const SplitSet& d) {
  for (const auto* part : {&d.train, &d.test_seen, &d.test_unseen, &d.test_mix})
    if (!part->empty()) return part->front().width;
  throw UsageError("dataset has no scenes");
}

inline std::vector<ClassId> parse_ids(const std::string& s) {
  std::vector<ClassId> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
      out.push_back(static_cast<ClassId>(v));
    } catch (const std::exception&) {
      throw UsageError("bad class id '" + tok + "' in list '" + s + "'");
    }
  }
  return out;
}

/// "w,h;w,h;..." in grid units.
inline std::vector<Anchor> parse_anchors(const std::string& s) {
  std::vector<Anchor> out;
  std::stringstream ss(s);
  std::string pair;
  while (std::getline(ss, pair, ';')) {
    const auto comma = pair.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument(pair);
      out.push_back({std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1))});
    } catch (const std::exception&) {
      throw UsageError("bad anchor '" + pair + "' (expected w,h)");
    }
  }
  if (out.empty()) throw UsageError("--anchors lists no priors");
  return out;
}

/// "epochs:rate,epochs:rate,..."
inline LrSchedule parse_schedule(const std::string& s) {
  std::vector<LrPhase> phases;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      phases.push_back({std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw UsageError("bad schedule phase '" + item + "' (expected epochs:rate)");
    }
  }
  return LrSchedule(std::move(phases));
}

inline void print_classes(std::ostream& out, const PrototypeTable& t) {
  out << "id  seen  name              vector\n";
  for (const ClassPrototype& c : t.classes()) {
    char head[64];
    std::snprintf(head, sizeof head, "%-3u %-5s %-17s", static_cast<unsigned>(c.id), c.seen ? "yes" : "no",
                  c.name.c_str());
    out << head;
    for (double v : c.vector) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %.2f", v);
      out << buf;
    }
    out << "\n";
  }
}

inline std::vector<ClassDef> library_prefix(std::size_t n) {
  std::vector<ClassDef> lib = default_class_library();
  if (n < 2 || n > lib.size()) {
    throw UsageError("--classes must lie in [2, " + std::to_string(lib.size()) + "], got " + std::to_string(n));
  }
  lib.resize(n);
  return lib;
}

inline std::string split_text(const std::vector<ClassId>& unseen, double energy, std::size_t classes) {
  nlohmann::ordered_json o;
  o["classes"] = classes;
  o["unseen"] = unseen;
  o["energy"] = energy;
  return o.dump(2) + "\n";
}

inline std::vector<ClassId> load_split_file(const std::string& path) {
  const auto root = zsyolo::detail::parse_file(path);
  return zsyolo::detail::field<std::vector<ClassId>>(root, "unseen", path);
}

inline std::string json_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void draw_outline(Tensor& img, const Box& px, double r, double g, double b) {
  const long W = static_cast<long>(img.dim(2)), H = static_cast<long>(img.dim(1));
  const long x0 = std::clamp(static_cast<long>(std::lround(px.left())), 0L, W - 1);
  const long x1 = std::clamp(static_cast<long>(std::lround(px.right())) - 1, 0L, W - 1);
  const long y0 = std::clamp(static_cast<long>(std::lround(px.top())), 0L, H - 1);
  const long y1 = std::clamp(static_cast<long>(std::lround(px.bottom())) - 1, 0L, H - 1);
  auto put = [&](long x, long y) {
    img.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = r;
    img.at(1, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = g;
    img.at(2, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = b;
  };
  for (long x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (long y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::size_t classes = 16;
  std::size_t scenes = 250;
  std::optional<std::size_t> unseen_scenes;
  std::optional<std::size_t> mix_scenes;
  std::string unseen;
  std::string split_file;
  std::size_t n_unseen = 6;
  std::uint64_t seed = 0;
  std::size_t image_size = 112;
  std::size_t max_objects = 4;
  std::size_t clutter = 0;
  std::size_t embedding_dim = 32;
};

inline int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.scenes == 0) throw UsageError("--scenes must be positive");
  const std::vector<ClassDef> lib = detail::library_prefix(a.classes);
  const PrototypeTable attrs = attribute_table(lib);
  std::vector<ClassId> unseen;
  if (!a.unseen.empty() && !a.split_file.empty()) throw UsageError("give either --unseen or --split-file, not both");
  if (!a.unseen.empty()) {
    unseen = detail::parse_ids(a.unseen);
  } else if (!a.split_file.empty()) {
    unseen = detail::load_split_file(a.split_file);
  } else {
    if (a.n_unseen == 0 || a.n_unseen >= a.classes) throw UsageError("--n-unseen must lie in [1, classes)");
    unseen = rank_splits_by_energy(attrs, a.n_unseen, 5000, a.seed).front().unseen;
  }
  for (ClassId id : unseen)
    if (!attrs.contains(id)) throw UsageError("unseen class id " + std::to_string(id) + " is not in the library");

  DatasetConfig dc;
  dc.scene.image_size = a.image_size;
  dc.scene.max_objects = a.max_objects;
  dc.scene.clutter = a.clutter;
  dc.scene.validate();
  dc.seen_scenes = a.scenes;
  dc.unseen_scenes = a.unseen_scenes.value_or(std::max<std::size_t>(1, a.scenes / 4));
  dc.mix_scenes = a.mix_scenes.value_or(std::max<std::size_t>(1, a.scenes / 6));
  dc.seed = a.seed;
  dc.fractions.seed = a.seed;
  const SplitSet data = generate_dataset(lib, unseen, dc);

  fs::create_directories(a.out);
  write_dataset(data, a.out);
  const Embeddings emb = synthetic_embeddings(attrs, a.embedding_dim, derive_seed(a.seed, 0xE3B));
  zsyolo::detail::write_text((fs::path(a.out) / "embeddings.json").string(), embeddings_text(emb));

  detail::print_classes(out, data.classes);
  out << "energy " << energy_score(data.classes) << "\n";
  out << "train " << data.train.size() << ", test_seen " << data.test_seen.size() << ", test_unseen "
      << data.test_unseen.size() << ", test_mix " << data.test_mix.size() << "\n";
  out << "wrote " << (fs::path(a.out) / "manifest.json").string() << "\n";
  return kOk;
}

struct SplitArgs {
  std::size_t classes = 16;
  std::size_t n_unseen = 6;
  std::size_t candidates = 5000;
  std::uint64_t seed = 0;
  std::optional<double> target_energy;
  std::size_t top = 10;
  std::string out;
};

inline int cmd_split(const SplitArgs& a, std::ostream& out) {
  const PrototypeTable attrs = attribute_table(detail::library_prefix(a.classes));
  if (a.n_unseen == 0 || a.n_unseen >= a.classes) throw UsageError("--n-unseen must lie in [1, classes)");
  const auto ranked = rank_splits_by_energy(attrs, a.n_unseen, a.candidates, a.seed);
  const RankedSplit* pick = &ranked.front();
  if (a.target_energy) {
    for (const RankedSplit& r : ranked)
      if (std::abs(r.energy - *a.target_energy) < std::abs(pick->energy - *a.target_energy)) pick = &r;
  }
  for (std::size_t i = 0; i < std::min(a.top, ranked.size()); ++i) {
    out << detail::json_number(ranked[i].energy) << "  unseen";
    for (ClassId id : ranked[i].unseen) out << " " << id;
    out << "\n";
  }
  out << "chosen energy " << detail::json_number(pick->energy) << "\n";
  if (!a.out.empty()) {
    zsyolo::detail::write_text(a.out, detail::split_text(pick->unseen, pick->energy, a.classes));
    out << "wrote " << a.out << "\n";
  }
  return kOk;
}

struct PrototypesArgs {
  std::string data;
  std::string mode = "attributes";
  std::string embeddings;
  std::size_t target_dim = 8;
  bool normalize = false;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_prototypes(const PrototypesArgs& a, std::ostream& out) {
  const SplitSet data = load_manifest(detail::manifest_path(a.data).string());
  PrototypeOptions opt;
  opt.mode = parse_prototype_mode(a.mode);
  opt.seed = a.seed;
  opt.target_dim = a.target_dim;
  opt.normalize_embeddings = a.normalize;
  std::optional<Embeddings> emb;
  if (opt.mode == PrototypeMode::w2vR) {
    if (a.embeddings.empty()) throw UsageError("--mode w2vR needs --embeddings");
    emb = load_embeddings(a.embeddings);
    opt.embeddings = &*emb;
  }
  const PrototypeBuild built = build_prototypes(data.classes, opt);
  detail::print_classes(out, built.table);
  if (opt.mode == PrototypeMode::w2vR) out << "fit_error " << detail::json_number(built.fit_error) << "\n";
  save_prototypes(built.table, a.out);
  out << "wrote " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string prototypes;
  std::string out;
  std::string log;
  std::string ablation = "full";
  std::string prototype_mode;  // recorded in the header; read from the file name otherwise unknown
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::size_t batch = 16;
  bool paper_schedule = false;
  std::string schedule;
  std::size_t grid = 7;
  std::size_t num_anchors = 3;
  std::string anchors;
  std::string noobj_rule = "cell";
  double grad_clip = 30.0;
};

inline TrainConfig make_train_config(const TrainArgs& a, const SplitSet& data, const PrototypeTable& protos) {
  TrainConfig tc;
  tc.seed = a.seed;
  tc.batch_size = a.batch;
  tc.grad_clip = a.grad_clip;
  if (a.paper_schedule && !a.schedule.empty()) throw UsageError("give either --paper-schedule or --schedule");
  tc.schedule = a.paper_schedule ? LrSchedule::paper() : a.schedule.empty() ? LrSchedule::desk() : detail::parse_schedule(a.schedule);
  tc.epochs = a.epochs.value_or(tc.schedule.total_epochs());
  if (tc.epochs != tc.schedule.total_epochs()) {
    throw UsageError("--epochs " + std::to_string(tc.epochs) + " is inconsistent with the learning-rate schedule (" +
                     std::to_string(tc.schedule.total_epochs()) + " epochs)");
  }
  if (!a.prototype_mode.empty()) tc.prototype_mode = parse_prototype_mode(a.prototype_mode);
  if (a.noobj_rule == "cell") {
    tc.noobj_rule = NoObjectRule::cell_overlap;
  } else if (a.noobj_rule == "prediction") {
    tc.noobj_rule = NoObjectRule::prediction_overlap;
  } else {
    throw UsageError("--noobj must be cell or prediction");
  }

  const std::size_t n = detail::data_image_size(data);
  ModelConfig& m = tc.model;
  m.grid.S = a.grid;
  m.grid.image_size = n;
  m.h = protos.dim();
  m.feature_channels = 64;
  m.ablation = parse_ablation(a.ablation);
  m.seed = a.seed;
  try {
    m.backbone = default_backbone(n, a.grid, m.feature_channels);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!a.anchors.empty()) {
    m.grid.priors = detail::parse_anchors(a.anchors);
  } else {
    m.grid.A = a.num_anchors;
    m.grid.priors = fit_priors(data.train, m.grid, a.seed);
  }
  m.grid.A = m.grid.priors.size();
  tc.validate();
  return tc;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  const SplitSet data = detail::load_data(a.data);
  const PrototypeTable protos = a.prototypes.empty() ? data.classes : load_prototypes(a.prototypes);
  for (const ClassPrototype& c : data.classes.classes()) {
    if (!protos.contains(c.id)) throw UsageError("prototype file has no class " + std::to_string(c.id));
  }
  const TrainConfig tc = make_train_config(a, data, protos);
  out << "training on " << data.train.size() << " scenes, " << tc.epochs << " epochs, ablation "
      << to_string(tc.model.ablation) << "\n";
  std::vector<EpochLog> logs;
  try {
    TrainResult r = train(tc, data.train, protos, [&](const EpochLog& l) {
      logs.push_back(l);
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %3zu  lr %.0e  loc %.4f  attr %.4f  conf %.4f  total %.4f\n", l.epoch + 1,
                    l.learning_rate, l.loss.loc, l.loss.attr, l.loss.conf, l.loss.total);
      out << buf << std::flush;
    });
    if (!a.log.empty()) zsyolo::detail::write_text(a.log, loss_csv(r.log));
    save_checkpoint(r.model, r.meta, a.out);
    out << "best epoch " << r.best_epoch + 1 << ", wrote " << a.out << "\n";
  } catch (const DivergenceError&) {
    if (!a.log.empty()) zsyolo::detail::write_text(a.log, loss_csv(logs));
    throw;
  }
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string prototypes;
  std::string out;
  bool oracle_gt = false;
  bool recognize = false;
  std::optional<std::size_t> grid;
  double conf_floor = 0.0;
  double nms_iou = 0.45;
  bool no_nms = false;
  bool conventional_f1 = false;
  std::string split = "all";
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const SplitSet data = detail::load_data(a.data);
  const PrototypeTable protos = a.prototypes.empty() ? data.classes : load_prototypes(a.prototypes);
  const std::size_t n = detail::data_image_size(data);
  std::optional<LoadedCheckpoint> ckpt;
  ModelConfig cfg;
  if (!a.checkpoint.empty()) {
    ckpt = load_checkpoint(a.checkpoint);
    check_grid(ckpt->model.config(), a.grid.value_or(ckpt->model.config().grid.S), n);
    cfg = ckpt->model.config();
  } else if (a.oracle_gt) {
    cfg.grid = {a.grid.value_or(7), 1, {{1.0, 1.0}}, n};
    cfg.h = protos.dim();
    cfg.feature_channels = 8;
    cfg.backbone = default_backbone(n, cfg.grid.S, cfg.feature_channels, 1);
  } else {
    throw UsageError("--checkpoint is required unless --oracle-gt is given");
  }
  if (ckpt && protos.dim() != cfg.h) {
    throw UsageError("prototype dimension " + std::to_string(protos.dim()) + " does not match checkpoint h=" +
                     std::to_string(cfg.h));
  }
  EvalOptions opt;
  opt.extract = {a.conf_floor, a.nms_iou, !a.no_nms};
  opt.conventional_f1 = a.conventional_f1;
  opt.recognize = a.recognize;
  opt.oracle_gt = a.oracle_gt;
  const Model model = ckpt ? ckpt->model : Model(cfg);

  struct Part {
    const char* flag;
    const char* name;
    const std::vector<Scene>* scenes;
    Restrict restrict;
  };
  const Part parts[] = {{"seen", "test_seen", &data.test_seen, Restrict::seen},
                        {"unseen", "test_unseen", &data.test_unseen, Restrict::unseen},
                        {"mix", "test_mix", &data.test_mix, Restrict::all}};
  if (a.split != "all" && a.split != "seen" && a.split != "unseen" && a.split != "mix") {
    throw UsageError("--split must be seen, unseen, mix or all");
  }
  fs::create_directories(a.out);
  for (const Part& p : parts) {
    if (a.split != "all" && a.split != p.flag) continue;
    const SplitEval ev = evaluate_split(p.name, model, *p.scenes, protos, p.restrict, opt);
    const fs::path base = fs::path(a.out) / p.name;
    zsyolo::detail::write_text(base.string() + "_metrics.csv", metrics_csv(ev.report));
    zsyolo::detail::write_text(base.string() + "_pr.csv", curve_csv(ev.report));
    zsyolo::detail::write_text(base.string() + "_recall.csv", recall_curve_csv(ev.report));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s scenes %4zu  ap %.4f  avg_fscore %.4f  recall@0.8 %.4f\n", p.name,
                  p.scenes->size(), ev.report.ap, ev.report.avg_fscore, recall_at(ev.report, 0.8));
    out << buf;
    if (ev.recognition) {
      zsyolo::detail::write_text(base.string() + "_recognition.csv", recognition_csv(*ev.recognition));
      const RecognitionReport& r = *ev.recognition;
      out << p.name << " recognition";
      if (r.seen_classes) out << "  mean seen AP " << detail::json_number(r.mean_seen);
      if (r.unseen_classes) out << "  mean unseen AP " << detail::json_number(r.mean_unseen);
      out << "\n";
    }
  }
  return kOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string prototypes;
  std::string out;
  std::string debug_ppm;
  double conf_floor = 0.5;
  double nms_iou = 0.45;
};

inline int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  const Tensor img = read_ppm(a.image);
  const GridSpec& grid = ckpt.model.grid();
  if (img.dim(1) != grid.image_size || img.dim(2) != grid.image_size) {
    throw UsageError("image is " + std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) +
                     ", checkpoint expects " + std::to_string(grid.image_size));
  }
  std::optional<PrototypeTable> protos;
  if (!a.prototypes.empty()) {
    protos = load_prototypes(a.prototypes);
    if (protos->dim() != ckpt.model.config().h) throw UsageError("prototype dimension does not match checkpoint h");
  }
  const auto dets = detect(ckpt.model, img, {a.conf_floor, a.nms_iou, true});
  nlohmann::ordered_json root;
  root["file"] = a.image;
  root["width"] = img.dim(2);
  root["height"] = img.dim(1);
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  Tensor overlay = img;
  for (const Detection& d : dets) {
    const Box px = grid_to_pixel(d.box, grid);
    nlohmann::ordered_json o;
    if (protos) o["class_id"] = nn_classify(d.semantic, *protos).class_id;
    o["x"] = px.x;
    o["y"] = px.y;
    o["w"] = px.w;
    o["h"] = px.h;
    o["confidence"] = d.confidence;
    o["semantic"] = d.semantic;
    objs.push_back(std::move(o));
    detail::draw_outline(overlay, px, 1.0, 0.0, 1.0);
  }
  root["objects"] = std::move(objs);
  zsyolo::detail::write_text(a.out, root.dump(2) + "\n");
  if (!a.debug_ppm.empty()) write_ppm(a.debug_ppm, overlay);
  out << dets.size() << " detections, wrote " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Zero-shot grid detector on synthetic attributed shapes"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--classes", gd.classes, "Number of library classes to use");
  gen->add_option("--scenes", gd.scenes, "Seen-only scenes (split into train and test_seen)");
  gen->add_option("--unseen-scenes", gd.unseen_scenes, "Unseen-only scenes (default scenes/4)");
  gen->add_option("--mix-scenes", gd.mix_scenes, "Mixed scenes (default scenes/6)");
  gen->add_option("--unseen", gd.unseen, "Comma-separated unseen class ids");
  gen->add_option("--split-file", gd.split_file, "Split file written by the split command");
  gen->add_option("--n-unseen", gd.n_unseen, "Unseen count for the default highest-energy split");
  gen->add_option("--seed", gd.seed);
  gen->add_option("--image-size", gd.image_size);
  gen->add_option("--max-objects", gd.max_objects);
  gen->add_option("--clutter", gd.clutter, "Maximum number of distractor blobs per scene");
  gen->add_option("--embedding-dim", gd.embedding_dim, "Dimension of the synthetic word embeddings");

  SplitArgs sp;
  auto* split = app.add_subcommand("split", "Rank seen/unseen splits by energy score");
  split->add_option("--classes", sp.classes);
  split->add_option("--n-unseen", sp.n_unseen);
  split->add_option("--candidates", sp.candidates, "Random candidates when enumeration is too large");
  split->add_option("--seed", sp.seed);
  split->add_option("--target-energy", sp.target_energy, "Pick the split closest to this energy");
  split->add_option("--top", sp.top, "Ranked splits to print");
  split->add_option("--out", sp.out, "Split file to write");

  PrototypesArgs pr;
  auto* protos = app.add_subcommand("prototypes", "Build a prototype table");
  protos->add_option("--data", pr.data, "Dataset directory or manifest")->required();
  protos->add_option("--mode,--prototypes", pr.mode, "attributes, onehot, random or w2vR");
  protos->add_option("--embeddings", pr.embeddings, "Source word embeddings (w2vR)");
  protos->add_option("--target-dim", pr.target_dim, "Reduced dimension (w2vR)");
  protos->add_flag("--normalize-embeddings", pr.normalize, "Scale source embeddings to unit length (w2vR)");
  protos->add_option("--seed", pr.seed);
  protos->add_option("--out", pr.out, "Prototype file to write")->required();

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train a detector");
  trn->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  trn->add_option("--prototypes", tr.prototypes, "Prototype file (default: dataset attributes)");
  trn->add_option("--prototype-mode", tr.prototype_mode, "Mode recorded in the checkpoint header");
  trn->add_option("--out", tr.out, "Checkpoint path")->required();
  trn->add_option("--log", tr.log, "Per-epoch loss CSV");
  trn->add_option("--ablation", tr.ablation, "full, visual or semantic");
  trn->add_option("--seed", tr.seed);
  trn->add_option("--epochs", tr.epochs);
  trn->add_option("--batch", tr.batch);
  trn->add_flag("--paper-schedule", tr.paper_schedule, "5/195/110/110 epochs");
  trn->add_option("--schedule", tr.schedule, "epochs:rate,... phases");
  trn->add_option("--grid", tr.grid, "Cells per side");
  trn->add_option("--num-anchors", tr.num_anchors, "Anchors fit by k-means");
  trn->add_option("--anchors", tr.anchors, "Explicit priors w,h;w,h;... in grid units");
  trn->add_option("--noobj", tr.noobj_rule, "Background rule: cell or prediction");
  trn->add_option("--grad-clip", tr.grad_clip, "Max global gradient norm per batch, 0 disables");

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on the test splits");
  evl->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  evl->add_option("--checkpoint", ev.checkpoint);
  evl->add_option("--prototypes", ev.prototypes);
  evl->add_option("--out", ev.out, "Directory for CSV reports")->required();
  evl->add_flag("--oracle-gt", ev.oracle_gt, "Score ground-truth boxes instead of predictions");
  evl->add_flag("--recognize", ev.recognize, "Add nearest-prototype labels and per-class AP");
  evl->add_option("--grid", ev.grid, "Expected cells per side");
  evl->add_option("--conf-floor", ev.conf_floor);
  evl->add_option("--nms-iou", ev.nms_iou);
  evl->add_flag("--no-nms", ev.no_nms);
  evl->add_flag("--conventional-f1", ev.conventional_f1, "Report 2PR/(P+R) instead of PR/(P+R)");
  evl->add_option("--split", ev.split, "seen, unseen, mix or all");

  PredictArgs pd;
  auto* pred = app.add_subcommand("predict", "Detect objects in one image");
  pred->add_option("--checkpoint", pd.checkpoint)->required();
  pred->add_option("--image", pd.image, "PPM image")->required();
  pred->add_option("--prototypes", pd.prototypes, "Label detections by nearest prototype");
  pred->add_option("--out", pd.out, "Detections JSON")->required();
  pred->add_option("--debug-ppm", pd.debug_ppm, "Image with detection outlines");
  pred->add_option("--conf-floor", pd.conf_floor);
  pred->add_option("--nms-iou", pd.nms_iou);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd, out);
    if (split->parsed()) return cmd_split(sp, out);
    if (protos->parsed()) return cmd_prototypes(pr, out);
    if (trn->parsed()) return cmd_train(tr, out);
    if (evl->parsed()) return cmd_eval(ev, out);
    if (pred->parsed()) return cmd_predict(pd, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"zsyolo"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace zsyolo::cli
