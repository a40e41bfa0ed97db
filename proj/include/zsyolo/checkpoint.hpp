#pragma once

// Checkpoint file:
//   "ZSY1" | uint32 LE header length | UTF-8 JSON header | float32 LE params
// Parameters follow Model::parameters() order. The header echoes the model
// configuration, epoch, per-epoch loss history and any training settings.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsyolo/loss.hpp"
#include "zsyolo/model.hpp"

namespace zsyolo {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kCheckpointMagic = {'Z', 'S', 'Y', '1'};

struct CheckpointMeta {
  std::size_t epoch = 0;
  std::vector<LossBreakdown> history;
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
};

namespace detail {

inline nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json o;
  o["S"] = c.grid.S;
  o["A"] = c.grid.A;
  nlohmann::ordered_json priors = nlohmann::ordered_json::array();
  for (const Anchor& a : c.grid.priors) priors.push_back({a.pw, a.ph});
  o["priors"] = std::move(priors);
  o["image_size"] = c.grid.image_size;
  o["h"] = c.h;
  o["feature_channels"] = c.feature_channels;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const LayerSpec& l : c.backbone) layers.push_back({l.out_channels, l.stride});
  o["backbone"] = std::move(layers);
  o["ablation_mode"] = to_string(c.ablation);
  o["seed"] = c.seed;
  return o;
}

inline ModelConfig config_from_json(const nlohmann::ordered_json& o) {
  try {
    ModelConfig c;
    c.grid.S = o.at("S").get<std::size_t>();
    c.grid.A = o.at("A").get<std::size_t>();
    c.grid.priors.clear();
    for (const auto& p : o.at("priors")) c.grid.priors.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    c.grid.image_size = o.at("image_size").get<std::size_t>();
    c.h = o.at("h").get<std::size_t>();
    c.feature_channels = o.at("feature_channels").get<std::size_t>();
    for (const auto& l : o.at("backbone")) c.backbone.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>()});
    c.ablation = parse_ablation(o.at("ablation_mode").get<std::string>());
    c.seed = o.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: bad model config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint header: invalid model config: ") + e.what());
  }
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::string checkpoint_bytes(const Model& model, const CheckpointMeta& meta) {
  nlohmann::ordered_json header;
  header["format"] = std::string(kCheckpointMagic.begin(), kCheckpointMagic.end());
  header["config"] = detail::config_json(model.config());
  header["epoch"] = meta.epoch;
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const LossBreakdown& b : meta.history) {
    hist.push_back({{"loc", b.loc}, {"attr", b.attr}, {"conf", b.conf}, {"total", b.total}});
  }
  header["loss_history"] = std::move(hist);
  header["settings"] = meta.settings;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  const auto names = model.parameter_names();
  const auto tensors = model.parameters();
  for (std::size_t i = 0; i < tensors.size(); ++i) params.push_back({{"name", names[i]}, {"shape", tensors[i]->shape()}});
  header["params"] = std::move(params);

  const std::string text = header.dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const Tensor* t : tensors) {
    for (double v : t->data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint " + path);
  const std::string bytes = checkpoint_bytes(model, meta);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint " + path);
}

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint parse_checkpoint(const std::string& bytes, const std::string& src = "checkpoint") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8) throw CheckpointError(src + ": truncated (no header)");
  const std::string magic = bytes.substr(0, 4);
  const std::string expected(kCheckpointMagic.begin(), kCheckpointMagic.end());
  if (magic != expected) {
    std::string shown;
    for (char c : magic) shown += (c >= 32 && c < 127) ? c : '?';
    throw CheckpointError(src + ": format '" + shown + "' is not supported, expected '" + expected + "'");
  }
  const std::uint32_t len = detail::get_u32(p + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw CheckpointError(src + ": truncated header");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(8, len));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(src + ": corrupt header: " + e.what());
  }
  if (!header.contains("config")) throw CheckpointError(src + ": header has no model config");
  LoadedCheckpoint out{Model(detail::config_from_json(header["config"])), {}};
  try {
    out.meta.epoch = header.value("epoch", std::size_t{0});
    for (const auto& b : header.value("loss_history", nlohmann::ordered_json::array())) {
      out.meta.history.push_back(
          {b.at("loc").get<double>(), b.at("attr").get<double>(), b.at("conf").get<double>(), b.at("total").get<double>()});
    }
    out.meta.settings = header.value("settings", nlohmann::ordered_json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(src + ": bad loss history: " + e.what());
  }
  std::size_t pos = 8 + len;
  std::size_t needed = 0;
  for (Tensor* t : out.model.parameters()) needed += t->size();
  if (bytes.size() != pos + 4 * needed) {
    throw CheckpointError(src + ": payload holds " + std::to_string((bytes.size() - pos) / 4) + " values, model needs " +
                          std::to_string(needed) + (bytes.size() < pos + 4 * needed ? " (truncated)" : ""));
  }
  for (Tensor* t : out.model.parameters()) {
    for (double& v : t->values()) {
      v = static_cast<double>(std::bit_cast<float>(detail::get_u32(p + pos)));
      pos += 4;
    }
  }
  return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return parse_checkpoint(bytes, path);
}

/// Rounds every parameter to float32, the precision a checkpoint keeps.
inline void round_to_checkpoint_precision(Model& model) {
  for (Tensor* t : model.parameters())
    for (double& v : t->values()) v = static_cast<double>(static_cast<float>(v));
}

/// Rejects a checkpoint whose grid differs from the data configuration.
inline void check_grid(const ModelConfig& checkpoint, std::size_t data_S, std::size_t data_image_size) {
  if (checkpoint.grid.S != data_S) {
    throw CheckpointError("grid mismatch: checkpoint has S=" + std::to_string(checkpoint.grid.S) +
                          ", data configuration has S=" + std::to_string(data_S));
  }
  if (checkpoint.grid.image_size != data_image_size) {
    throw CheckpointError("image size mismatch: checkpoint expects " + std::to_string(checkpoint.grid.image_size) +
                          " px, data has " + std::to_string(data_image_size) + " px");
  }
}

}  // namespace zsyolo
