#pragma once

// JSON manifests for datasets and prototype tables.
//
//   {"h": 8,
//    "classes": [{"id", "name", "attributes": [...], "seen"}],
//    "scenes":  [{"id", "file", "width", "height", "split",
//                 "objects": [{"class_id", "x", "y", "w", "h"}]}]}
//
// Boxes are pixel center-format. A prototype file is a manifest with no
// scenes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "zsyolo/scene.hpp"
#include "zsyolo/semantics.hpp"

namespace zsyolo {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson classes_json(const PrototypeTable& table) {
  ojson arr = ojson::array();
  for (const ClassPrototype& c : table.classes()) {
    ojson o;
    o["id"] = c.id;
    o["name"] = c.name;
    o["attributes"] = c.vector;
    o["seen"] = c.seen;
    arr.push_back(std::move(o));
  }
  return arr;
}

inline ojson scene_json(const Scene& s, const char* split) {
  ojson o;
  o["id"] = s.id;
  o["file"] = s.file;
  o["width"] = s.width;
  o["height"] = s.height;
  o["split"] = split;
  ojson objs = ojson::array();
  for (const GroundTruth& g : s.objects) {
    ojson b;
    b["class_id"] = g.class_id;
    b["x"] = g.box.x;
    b["y"] = g.box.y;
    b["w"] = g.box.w;
    b["h"] = g.box.h;
    objs.push_back(std::move(b));
  }
  o["objects"] = std::move(objs);
  return o;
}

/// Field access with a path-qualified error message.
template <class T>
T field(const ojson& o, const char* key, const std::string& where) {
  if (!o.is_object()) throw ManifestError(where + ": expected an object");
  const auto it = o.find(key);
  if (it == o.end()) throw ManifestError(where + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ManifestError(where + "." + key + ": wrong type (" + it->type_name() + ")");
  }
}

inline PrototypeTable parse_classes(const ojson& root, const std::string& src) {
  const auto h = field<std::size_t>(root, "h", src);
  if (!root.contains("classes") || !root["classes"].is_array()) throw ManifestError(src + ": missing 'classes' array");
  std::vector<ClassPrototype> classes;
  for (std::size_t i = 0; i < root["classes"].size(); ++i) {
    const ojson& c = root["classes"][i];
    const std::string where = src + ": classes[" + std::to_string(i) + "]";
    ClassPrototype p;
    p.id = field<ClassId>(c, "id", where);
    p.name = field<std::string>(c, "name", where);
    if (!c.contains("attributes") || !c["attributes"].is_array() || c["attributes"].empty()) {
      throw ManifestError(where + ": class '" + p.name + "' (id " + std::to_string(p.id) + ") has no attribute vector");
    }
    p.vector = field<std::vector<double>>(c, "attributes", where);
    if (p.vector.size() != h) {
      throw ManifestError(where + ": class '" + p.name + "' has " + std::to_string(p.vector.size()) +
                          " attributes, manifest declares h=" + std::to_string(h));
    }
    p.seen = field<bool>(c, "seen", where);
    classes.push_back(std::move(p));
  }
  try {
    return PrototypeTable(std::move(classes));
  } catch (const std::invalid_argument& e) {
    throw ManifestError(src + ": " + e.what());
  }
}

inline ojson parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path);
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace detail

inline std::string manifest_text(const SplitSet& split) {
  detail::ojson root;
  root["h"] = split.h();
  root["classes"] = detail::classes_json(split.classes);
  detail::ojson scenes = detail::ojson::array();
  for (const Scene& s : split.train) scenes.push_back(detail::scene_json(s, "train"));
  for (const Scene& s : split.test_seen) scenes.push_back(detail::scene_json(s, "test_seen"));
  for (const Scene& s : split.test_unseen) scenes.push_back(detail::scene_json(s, "test_unseen"));
  for (const Scene& s : split.test_mix) scenes.push_back(detail::scene_json(s, "test_mix"));
  root["scenes"] = std::move(scenes);
  return root.dump(2) + "\n";
}

inline void save_manifest(const SplitSet& split, const std::string& path) {
  detail::write_text(path, manifest_text(split));
}

/// Loads annotations only; images stay empty until load_images.
inline SplitSet load_manifest(const std::string& path) {
  const detail::ojson root = detail::parse_file(path);
  SplitSet out;
  out.classes = detail::parse_classes(root, path);
  if (!root.contains("scenes") || !root["scenes"].is_array()) throw ManifestError(path + ": missing 'scenes' array");
  for (std::size_t i = 0; i < root["scenes"].size(); ++i) {
    const auto& s = root["scenes"][i];
    const std::string where = path + ": scenes[" + std::to_string(i) + "]";
    Scene sc;
    sc.id = detail::field<std::size_t>(s, "id", where);
    sc.file = detail::field<std::string>(s, "file", where);
    sc.width = detail::field<std::size_t>(s, "width", where);
    sc.height = detail::field<std::size_t>(s, "height", where);
    const std::string split = s.contains("split") ? detail::field<std::string>(s, "split", where) : "train";
    if (!s.contains("objects") || !s["objects"].is_array()) throw ManifestError(where + ": missing 'objects' array");
    for (std::size_t j = 0; j < s["objects"].size(); ++j) {
      const auto& o = s["objects"][j];
      const std::string ow = where + ".objects[" + std::to_string(j) + "]";
      GroundTruth g;
      g.class_id = detail::field<ClassId>(o, "class_id", ow);
      g.box = {detail::field<double>(o, "x", ow), detail::field<double>(o, "y", ow), detail::field<double>(o, "w", ow),
               detail::field<double>(o, "h", ow)};
      if (!out.classes.contains(g.class_id)) {
        throw ManifestError(ow + ": unknown class_id " + std::to_string(g.class_id));
      }
      if (!(g.box.w > 0.0 && g.box.h > 0.0)) throw ManifestError(ow + ": box extents must be positive");
      if (g.box.left() < 0.0 || g.box.top() < 0.0 || g.box.right() > static_cast<double>(sc.width) ||
          g.box.bottom() > static_cast<double>(sc.height)) {
        throw ManifestError(ow + ": box lies outside the " + std::to_string(sc.width) + "x" +
                            std::to_string(sc.height) + " image");
      }
      g.attributes = out.classes.at(g.class_id).vector;
      sc.objects.push_back(std::move(g));
    }
    if (split == "train") {
      out.train.push_back(std::move(sc));
    } else if (split == "test_seen") {
      out.test_seen.push_back(std::move(sc));
    } else if (split == "test_unseen") {
      out.test_unseen.push_back(std::move(sc));
    } else if (split == "test_mix") {
      out.test_mix.push_back(std::move(sc));
    } else {
      throw ManifestError(where + ".split: unknown partition '" + split + "'");
    }
  }
  return out;
}

/// Reads every scene image relative to `base_dir`.
inline void load_images(SplitSet& split, const std::string& base_dir) {
  for (auto* part : {&split.train, &split.test_seen, &split.test_unseen, &split.test_mix}) {
    for (Scene& s : *part) {
      s.image = read_ppm((std::filesystem::path(base_dir) / s.file).string());
      if (s.image.dim(1) != s.height || s.image.dim(2) != s.width) {
        throw ManifestError(s.file + ": image size does not match the manifest");
      }
    }
  }
}

/// Writes images under `dir` and the manifest to dir/manifest.json.
inline void write_dataset(const SplitSet& split, const std::string& dir) {
  for (const auto* part : {&split.train, &split.test_seen, &split.test_unseen, &split.test_mix}) {
    for (const Scene& s : *part) {
      const std::filesystem::path p = std::filesystem::path(dir) / s.file;
      std::filesystem::create_directories(p.parent_path());
      write_ppm(p.string(), s.image);
    }
  }
  save_manifest(split, (std::filesystem::path(dir) / "manifest.json").string());
}

inline std::string prototypes_text(const PrototypeTable& table) {
  detail::ojson root;
  root["h"] = table.dim();
  root["classes"] = detail::classes_json(table);
  root["scenes"] = detail::ojson::array();
  return root.dump(2) + "\n";
}

inline void save_prototypes(const PrototypeTable& table, const std::string& path) {
  detail::write_text(path, prototypes_text(table));
}

inline PrototypeTable load_prototypes(const std::string& path) {
  return detail::parse_classes(detail::parse_file(path), path);
}

}  // namespace zsyolo
