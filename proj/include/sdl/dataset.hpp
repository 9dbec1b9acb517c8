#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sdl/aggregate.hpp"
#include "sdl/error.hpp"

namespace sdl {

// Interned names of one dataset's frame features, object features and masks.
class NameTable {
 public:
  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t intern(const std::string& name) {
    auto [it, added] = index_.emplace(name, names_.size());
    if (added) names_.push_back(name);
    return it->second;
  }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Schema {
  NameTable frame_features;
  NameTable object_features;
  NameTable masks;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct Frame {
  std::uint32_t episode = 0;
  std::int64_t t = 0;
  // Indexed by Schema::frame_features; NaN marks a missing value.
  std::vector<double> features;
  // One vector per object, indexed by Schema::object_features.
  std::vector<std::vector<double>> objects;
  // Indexed by Schema::masks; an empty grid marks a missing mask.
  std::vector<MaskGrid> masks;
  bool label = false;

  double feature(std::size_t i) const { return i < features.size() ? features[i] : kMissing; }
  double object_feature(std::size_t obj, std::size_t i) const {
    const auto& o = objects[obj];
    return i < o.size() ? o[i] : kMissing;
  }
  const MaskGrid* mask(std::size_t i) const {
    if (i >= masks.size() || masks[i].empty()) return nullptr;
    return &masks[i];
  }
};

struct Dataset {
  Schema schema;
  std::vector<std::string> episodes;
  std::vector<Frame> frames;
  std::unordered_map<std::string, std::uint32_t> episode_ids;

  std::uint32_t episode_index(const std::string& name) {
    if (episode_ids.size() != episodes.size()) {
      episode_ids.clear();
      for (std::size_t i = 0; i < episodes.size(); ++i) episode_ids.emplace(episodes[i], static_cast<std::uint32_t>(i));
    }
    auto [it, added] = episode_ids.emplace(name, static_cast<std::uint32_t>(episodes.size()));
    if (added) episodes.push_back(name);
    return it->second;
  }

  std::string frame_id(std::size_t i) const {
    const Frame& f = frames[i];
    return episodes[f.episode] + ":" + std::to_string(f.t);
  }

  // Contiguous [begin, end) frame ranges sharing one episode.
  std::vector<std::pair<std::size_t, std::size_t>> episode_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (out.empty() || frames[out.back().first].episode != frames[i].episode)
        out.emplace_back(i, i + 1);
      else
        out.back().second = i + 1;
    }
    return out;
  }
};

// Masks travel as run-length rows: each row alternates runs of clear and
// set pixels, starting with a (possibly zero) clear run.
inline nlohmann::ordered_json encode_mask_rows(const MaskGrid& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int y = 0; y < m.height(); ++y) {
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    bool cur = false;
    int len = 0;
    for (int x = 0; x < m.width(); ++x) {
      bool b = m.at(x, y);
      if (b != cur) {
        runs.push_back(len);
        cur = b;
        len = 0;
      }
      ++len;
    }
    runs.push_back(len);
    rows.push_back(std::move(runs));
  }
  return rows;
}

inline MaskGrid decode_mask(const nlohmann::json& j) {
  int w = j.at("w").get<int>();
  int h = j.at("h").get<int>();
  const auto& rows = j.at("bits");
  if (!rows.is_array() || static_cast<int>(rows.size()) != h) throw InputError("mask needs one RLE row per line");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  for (int y = 0; y < h; ++y) {
    int x = 0;
    bool set = false;
    for (const auto& run : rows[static_cast<std::size_t>(y)]) {
      int len = run.get<int>();
      if (len < 0 || x + len > w) throw InputError("mask row " + std::to_string(y) + " overruns width");
      if (set)
        for (int i = 0; i < len; ++i) bits[static_cast<std::size_t>(y) * w + x + i] = 1;
      x += len;
      set = !set;
    }
    if (x != w) throw InputError("mask row " + std::to_string(y) + " does not cover width");
  }
  return MaskGrid(w, h, bits);
}

inline void set_slot(std::vector<double>& v, std::size_t i, double x) {
  if (v.size() <= i) v.resize(i + 1, kMissing);
  v[i] = x;
}

// Parse one JSON-lines frame record into `ds`.
inline void append_frame(Dataset& ds, const nlohmann::json& j) {
  Frame f;
  const auto& ep = j.at("episode");
  f.episode = ds.episode_index(ep.is_string() ? ep.get<std::string>() : ep.dump());
  f.t = j.at("t").get<std::int64_t>();
  if (auto it = j.find("features"); it != j.end())
    for (const auto& [name, val] : it->items())
      set_slot(f.features, ds.schema.frame_features.intern(name), val.get<double>());
  if (auto it = j.find("objects"); it != j.end()) {
    for (const auto& obj : *it) {
      std::vector<double> o;
      if (auto fit = obj.find("features"); fit != obj.end())
        for (const auto& [name, val] : fit->items())
          set_slot(o, ds.schema.object_features.intern(name), val.get<double>());
      f.objects.push_back(std::move(o));
    }
  }
  if (auto it = j.find("masks"); it != j.end()) {
    for (const auto& [name, val] : it->items()) {
      std::size_t mi = ds.schema.masks.intern(name);
      if (f.masks.size() <= mi) f.masks.resize(mi + 1);
      f.masks[mi] = decode_mask(val);
    }
  }
  f.label = j.at("label").get<bool>();
  ds.frames.push_back(std::move(f));
}

inline Dataset read_dataset(std::istream& in, const std::string& source = "dataset") {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      append_frame(ds, nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  return read_dataset(in, path);
}

inline nlohmann::ordered_json frame_to_json(const Dataset& ds, const Frame& f) {
  nlohmann::ordered_json j;
  j["episode"] = ds.episodes[f.episode];
  j["t"] = f.t;
  nlohmann::ordered_json feats = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < f.features.size(); ++i)
    if (!std::isnan(f.features[i])) feats[ds.schema.frame_features.names()[i]] = f.features[i];
  j["features"] = std::move(feats);
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (const auto& o : f.objects) {
    nlohmann::ordered_json of = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < o.size(); ++i)
      if (!std::isnan(o[i])) of[ds.schema.object_features.names()[i]] = o[i];
    objs.push_back({{"features", std::move(of)}});
  }
  j["objects"] = std::move(objs);
  nlohmann::ordered_json masks = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < f.masks.size(); ++i) {
    if (f.masks[i].empty()) continue;
    masks[ds.schema.masks.names()[i]] = {
        {"w", f.masks[i].width()}, {"h", f.masks[i].height()}, {"bits", encode_mask_rows(f.masks[i])}};
  }
  if (!masks.empty()) j["masks"] = std::move(masks);
  j["label"] = f.label;
  return j;
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& f : ds.frames) out << frame_to_json(ds, f).dump() << '\n';
}

}  // namespace sdl
