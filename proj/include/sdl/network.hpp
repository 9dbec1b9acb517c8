#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sdl/error.hpp"
#include "sdl/param.hpp"
#include "sdl/temporal.hpp"

namespace sdl {

enum class UnitType { above, below, and_gate, or_gate, smooth, mono, count, fraction, region };
enum class Scope { object, frame };

inline const char* to_string(UnitType t) {
  switch (t) {
    case UnitType::above: return "above";
    case UnitType::below: return "below";
    case UnitType::and_gate: return "and";
    case UnitType::or_gate: return "or";
    case UnitType::smooth: return "smooth";
    case UnitType::mono: return "mono";
    case UnitType::count: return "count";
    case UnitType::fraction: return "fraction";
    case UnitType::region: return "region";
  }
  return "?";
}

inline std::optional<UnitType> unit_type_from(std::string_view s) {
  for (auto t : {UnitType::above, UnitType::below, UnitType::and_gate, UnitType::or_gate, UnitType::smooth,
                 UnitType::mono, UnitType::count, UnitType::fraction, UnitType::region})
    if (s == to_string(t)) return t;
  return std::nullopt;
}

inline const char* to_string(Scope s) { return s == Scope::object ? "object" : "frame"; }

enum RegionBound { kX0 = 0, kX1 = 1, kY0 = 2, kY1 = 3 };
inline constexpr std::array<const char*, 4> kBoundNames = {"x0", "x1", "y0", "y1"};

struct UnitSpec {
  std::string id;
  UnitType type = UnitType::above;
  Scope scope = Scope::frame;
  // above / below / fraction
  std::string feature;
  std::optional<double> default_value;
  double cut = 0.0;
  // and / or use several inputs; smooth / mono / count exactly one.
  std::vector<std::string> inputs;
  // Threshold, time constant, count, fraction or region-count parameter.
  std::string param;
  // region
  std::string mask;
  std::array<std::string, 4> bounds;
  // smooth / mono
  std::optional<int> scan_margin;
  bool rotate_blame = true;

  bool is_temporal() const { return type == UnitType::smooth || type == UnitType::mono; }
};

struct NetworkSpec {
  std::string name;
  int bins_per_side = kDefaultBinsPerSide;
  std::vector<ParamSpec> params;
  std::vector<UnitSpec> units;
  std::string output;
  // Unit indices in dependency order; filled by validate().
  std::vector<std::size_t> order;

  std::optional<ParamIndex> find_param(std::string_view id) const {
    for (const auto& p : params)
      if (p.id == id) return p.index;
    return std::nullopt;
  }
  const ParamSpec& param(std::string_view id) const {
    auto i = find_param(id);
    if (!i) throw ConfigError("unknown parameter '" + std::string(id) + "'");
    return params[static_cast<std::size_t>(*i)];
  }
  ParamSpec& param(std::string_view id) {
    return const_cast<ParamSpec&>(static_cast<const NetworkSpec&>(*this).param(id));
  }
  std::optional<std::size_t> find_unit(std::string_view id) const {
    for (std::size_t i = 0; i < units.size(); ++i)
      if (units[i].id == id) return i;
    return std::nullopt;
  }

  void validate();
};

namespace detail {

inline std::string where(std::size_t i, const UnitSpec& u) {
  return "units[" + std::to_string(i) + "] '" + u.id + "'";
}

// +1 when raising the parameter can only turn decisions true, -1 when it
// can only turn them false.
inline std::vector<std::pair<std::string, int>> param_refs(const UnitSpec& u) {
  switch (u.type) {
    case UnitType::above:
    case UnitType::smooth:
    case UnitType::count:
    case UnitType::fraction: return {{u.param, -1}};
    case UnitType::below:
    case UnitType::mono: return {{u.param, +1}};
    case UnitType::region:
      return {{u.param, -1}, {u.bounds[kX0], -1}, {u.bounds[kX1], +1}, {u.bounds[kY0], -1}, {u.bounds[kY1], +1}};
    case UnitType::and_gate:
    case UnitType::or_gate: return {};
  }
  return {};
}

}  // namespace detail

// Check every structural invariant and compute the evaluation order.
// Parameters must be referenced with a single polarity so the whole network
// stays monotone in each parameter; that is what makes single-parameter
// blame sound when one value feeds several units.
inline void NetworkSpec::validate() {
  std::unordered_map<std::string, ParamIndex> pidx;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].index = static_cast<ParamIndex>(i);
    params[i].validate();
    if (!pidx.emplace(params[i].id, params[i].index).second)
      throw ConfigError("params: duplicate parameter '" + params[i].id + "'");
  }
  if (bins_per_side < 1) throw ConfigError("bins_per_side must be >= 1");

  std::unordered_map<std::string, std::size_t> uidx;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].id.empty()) throw ConfigError("units[" + std::to_string(i) + "]: missing id");
    if (!uidx.emplace(units[i].id, i).second)
      throw ConfigError(detail::where(i, units[i]) + ": duplicate unit id");
  }
  if (units.empty()) throw ConfigError("network has no units");

  std::map<std::string, int> polarity;
  std::vector<std::vector<std::size_t>> deps(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const UnitSpec& u = units[i];
    const std::string at = detail::where(i, u);
    auto need_param = [&](const std::string& id, const char* role) -> const ParamSpec& {
      if (id.empty()) throw ConfigError(at + ": missing " + role + " parameter");
      auto it = pidx.find(id);
      if (it == pidx.end()) throw ConfigError(at + ": dangling parameter reference '" + id + "'");
      return params[static_cast<std::size_t>(it->second)];
    };
    auto need_integer = [&](const ParamSpec& p, const char* role, double min_value) {
      if (!p.is_integer()) throw ConfigError(at + ": " + role + " parameter '" + p.id + "' must be integer");
      if (p.value < min_value || p.lo < min_value)
        throw ConfigError(at + ": " + role + " parameter '" + p.id + "' must stay >= " +
                          std::to_string(static_cast<int>(min_value)));
    };
    auto frame_only = [&] {
      if (u.scope != Scope::frame) throw ConfigError(at + ": " + to_string(u.type) + " units are frame-level only");
    };
    auto want_inputs = [&](std::size_t lo, std::size_t hi) {
      if (u.inputs.size() < lo || u.inputs.size() > hi)
        throw ConfigError(at + ": wrong number of inputs for " + to_string(u.type));
    };

    switch (u.type) {
      case UnitType::above:
      case UnitType::below:
        if (u.feature.empty()) throw ConfigError(at + ": missing feature");
        need_param(u.param, "threshold");
        want_inputs(0, 0);
        break;
      case UnitType::and_gate:
      case UnitType::or_gate: want_inputs(1, SIZE_MAX); break;
      case UnitType::smooth:
      case UnitType::mono: {
        frame_only();
        want_inputs(1, 1);
        need_integer(need_param(u.param, "time constant"), "time constant", 1);
        if (u.scan_margin && *u.scan_margin < 1) throw ConfigError(at + ": scan_margin must be >= 1");
        break;
      }
      case UnitType::count:
        frame_only();
        want_inputs(1, 1);
        need_integer(need_param(u.param, "count"), "count", 1);
        break;
      case UnitType::fraction:
        frame_only();
        want_inputs(0, 0);
        if (u.feature.empty()) throw ConfigError(at + ": missing feature");
        need_param(u.param, "fraction");
        break;
      case UnitType::region: {
        frame_only();
        want_inputs(0, 0);
        if (u.mask.empty()) throw ConfigError(at + ": missing mask");
        need_param(u.param, "count threshold");
        std::array<const ParamSpec*, 4> b{};
        for (std::size_t k = 0; k < 4; ++k) {
          b[k] = &need_param(u.bounds[k], kBoundNames[k]);
          need_integer(*b[k], kBoundNames[k], 0);
        }
        if (!(b[kX0]->value < b[kX1]->value) || !(b[kY0]->value < b[kY1]->value))
          throw ConfigError(at + ": region needs x0 < x1 and y0 < y1");
        break;
      }
    }

    for (const auto& in : u.inputs) {
      auto it = uidx.find(in);
      if (it == uidx.end()) throw ConfigError(at + ": dangling input reference '" + in + "'");
      const UnitSpec& src = units[it->second];
      if (u.type == UnitType::count) {
        if (src.scope != Scope::object) throw ConfigError(at + ": count input '" + in + "' must be object-level");
      } else if (src.scope != u.scope) {
        throw ConfigError(at + ": input '" + in + "' is " + to_string(src.scope) + "-level but unit is " +
                          to_string(u.scope) + "-level");
      }
      deps[i].push_back(it->second);
    }

    for (const auto& [pid, pol] : detail::param_refs(u)) {
      auto [it, added] = polarity.emplace(pid, pol);
      if (!added && it->second != pol)
        throw ConfigError(at + ": parameter '" + pid + "' is used with opposite polarities");
    }
  }

  for (const auto& p : params)
    if (!polarity.count(p.id)) throw ConfigError("params: parameter '" + p.id + "' is not referenced by any unit");

  // Kahn's algorithm; whatever remains sits on a cycle.
  std::vector<std::size_t> indeg(units.size(), 0);
  std::vector<std::vector<std::size_t>> users(units.size());
  for (std::size_t i = 0; i < units.size(); ++i)
    for (std::size_t d : deps[i]) {
      ++indeg[i];
      users[d].push_back(i);
    }
  std::queue<std::size_t> ready;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (indeg[i] == 0) ready.push(i);
  order.clear();
  while (!ready.empty()) {
    std::size_t i = ready.front();
    ready.pop();
    order.push_back(i);
    for (std::size_t u : users[i])
      if (--indeg[u] == 0) ready.push(u);
  }
  if (order.size() != units.size()) {
    std::string names;
    for (std::size_t i = 0; i < units.size(); ++i)
      if (indeg[i] > 0) names += (names.empty() ? "" : ", ") + units[i].id;
    throw ConfigError("wiring cycle among units: " + names);
  }

  auto out = uidx.find(output);
  if (output.empty()) throw ConfigError("network has no output unit");
  if (out == uidx.end()) throw ConfigError("output: unknown unit '" + output + "'");
  if (units[out->second].scope != Scope::frame) throw ConfigError("output: unit '" + output + "' must be frame-level");
}

namespace detail {

inline double json_number(const nlohmann::ordered_json& j, const std::string& key, const std::string& at) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw ConfigError(at + ": '" + key + "' must be a number");
  return it->get<double>();
}

inline void reject_unknown(const nlohmann::ordered_json& j, std::initializer_list<std::string_view> known,
                           const std::string& at) {
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(at + ": unknown key '" + k + "'");
}

inline ParamSpec parse_param(const std::string& id, const nlohmann::ordered_json& j) {
  const std::string at = "params." + id;
  if (!j.is_object()) throw ConfigError(at + ": expected an object");
  reject_unknown(j, {"value", "tol", "tol_neg", "tol_pos", "kind", "lo", "hi"}, at);
  ParamSpec p;
  p.id = id;
  p.value = json_number(j, "value", at);
  if (j.contains("tol")) {
    p.tol_neg = p.tol_pos = json_number(j, "tol", at);
  } else {
    p.tol_neg = json_number(j, "tol_neg", at);
    p.tol_pos = json_number(j, "tol_pos", at);
  }
  std::string kind = j.value("kind", std::string("real"));
  if (kind == "real")
    p.kind = ParamKind::real;
  else if (kind == "integer")
    p.kind = ParamKind::integer;
  else
    throw ConfigError(at + ": unknown kind '" + kind + "'");
  if (j.contains("lo")) p.lo = json_number(j, "lo", at);
  if (j.contains("hi")) p.hi = json_number(j, "hi", at);
  return p;
}

inline std::string json_string(const nlohmann::ordered_json& j, const char* key, const std::string& at,
                               bool required = true) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw ConfigError(at + ": missing '" + key + "'");
    return {};
  }
  if (!it->is_string()) throw ConfigError(at + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

inline UnitSpec parse_unit(std::size_t i, const nlohmann::ordered_json& j) {
  std::string at = "units[" + std::to_string(i) + "]";
  if (!j.is_object()) throw ConfigError(at + ": expected an object");
  UnitSpec u;
  u.id = json_string(j, "id", at);
  at += " '" + u.id + "'";
  reject_unknown(j,
                 {"id", "type", "scope", "feature", "default", "param", "input", "inputs", "cut", "mask", "bounds",
                  "scan_margin", "rotate_blame"},
                 at);
  std::string type = json_string(j, "type", at);
  auto t = unit_type_from(type);
  if (!t) throw ConfigError(at + ": unknown unit type '" + type + "'");
  u.type = *t;
  std::string scope = json_string(j, "scope", at, false);
  if (scope.empty() || scope == "frame")
    u.scope = Scope::frame;
  else if (scope == "object")
    u.scope = Scope::object;
  else
    throw ConfigError(at + ": unknown scope '" + scope + "'");

  u.feature = json_string(j, "feature", at, false);
  if (j.contains("default")) u.default_value = json_number(j, "default", at);
  if (j.contains("cut")) u.cut = json_number(j, "cut", at);
  u.param = json_string(j, "param", at, false);
  u.mask = json_string(j, "mask", at, false);
  if (auto it = j.find("inputs"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(at + ": 'inputs' must be an array");
    for (const auto& s : *it) {
      if (!s.is_string()) throw ConfigError(at + ": 'inputs' entries must be strings");
      u.inputs.push_back(s.get<std::string>());
    }
  }
  if (j.contains("input")) u.inputs.push_back(json_string(j, "input", at));
  if (auto it = j.find("bounds"); it != j.end()) {
    for (std::size_t k = 0; k < 4; ++k) u.bounds[k] = json_string(*it, kBoundNames[k], at + ".bounds");
  }
  if (u.type == UnitType::fraction && !j.contains("cut")) throw ConfigError(at + ": missing 'cut'");
  if (j.contains("scan_margin")) u.scan_margin = static_cast<int>(json_number(j, "scan_margin", at));
  if (auto it = j.find("rotate_blame"); it != j.end()) u.rotate_blame = it->get<bool>();
  return u;
}

}  // namespace detail

inline NetworkSpec network_from_json(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) throw ConfigError("network document must be a JSON object");
  detail::reject_unknown(doc, {"name", "bins_per_side", "params", "units", "output"}, "network");
  NetworkSpec net;
  net.name = doc.value("name", std::string());
  if (doc.contains("bins_per_side")) net.bins_per_side = doc.at("bins_per_side").get<int>();
  if (auto it = doc.find("params"); it != doc.end()) {
    if (!it->is_object()) throw ConfigError("params: expected an object");
    for (const auto& [id, pj] : it->items()) net.params.push_back(detail::parse_param(id, pj));
  }
  auto units = doc.find("units");
  if (units == doc.end() || !units->is_array()) throw ConfigError("units: expected an array");
  for (std::size_t i = 0; i < units->size(); ++i) net.units.push_back(detail::parse_unit(i, (*units)[i]));
  auto out = doc.find("output");
  if (out == doc.end()) throw ConfigError("output: missing");
  if (out->is_array()) {
    if (out->size() != 1) throw ConfigError("output: multiple outputs (" + std::to_string(out->size()) + ")");
    net.output = (*out)[0].get<std::string>();
  } else if (out->is_string()) {
    net.output = out->get<std::string>();
  } else {
    throw ConfigError("output: expected a unit id");
  }
  net.validate();
  return net;
}

inline NetworkSpec parse_network(std::string_view text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("network document: ") + e.what());
  }
  try {
    return network_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network document: ") + e.what());
  }
}

inline NetworkSpec load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open network '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_network(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline nlohmann::ordered_json number_json(double v, bool integer) {
  if (integer) return static_cast<long long>(v);
  return v;
}

inline nlohmann::ordered_json param_to_json(const ParamSpec& p) {
  nlohmann::ordered_json j;
  bool in = p.is_integer();
  j["value"] = number_json(p.value, in);
  j["tol_neg"] = number_json(p.tol_neg, in);
  j["tol_pos"] = number_json(p.tol_pos, in);
  j["kind"] = to_string(p.kind);
  if (std::isfinite(p.lo)) j["lo"] = number_json(p.lo, in);
  if (std::isfinite(p.hi)) j["hi"] = number_json(p.hi, in);
  return j;
}

inline nlohmann::ordered_json network_to_json(const NetworkSpec& net) {
  nlohmann::ordered_json doc;
  if (!net.name.empty()) doc["name"] = net.name;
  doc["bins_per_side"] = net.bins_per_side;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& p : net.params) params[p.id] = param_to_json(p);
  doc["params"] = std::move(params);
  nlohmann::ordered_json units = nlohmann::ordered_json::array();
  for (const auto& u : net.units) {
    nlohmann::ordered_json j;
    j["id"] = u.id;
    j["type"] = to_string(u.type);
    j["scope"] = to_string(u.scope);
    if (!u.feature.empty()) j["feature"] = u.feature;
    if (u.default_value) j["default"] = *u.default_value;
    if (u.type == UnitType::fraction) j["cut"] = u.cut;
    if (u.type == UnitType::and_gate || u.type == UnitType::or_gate)
      j["inputs"] = u.inputs;
    else if (!u.inputs.empty())
      j["input"] = u.inputs.front();
    if (!u.param.empty()) j["param"] = u.param;
    if (u.type == UnitType::region) {
      j["mask"] = u.mask;
      nlohmann::ordered_json b;
      for (std::size_t k = 0; k < 4; ++k) b[kBoundNames[k]] = u.bounds[k];
      j["bounds"] = std::move(b);
    }
    if (u.scan_margin) j["scan_margin"] = *u.scan_margin;
    if (u.type == UnitType::mono && !u.rotate_blame) j["rotate_blame"] = false;
    units.push_back(std::move(j));
  }
  doc["units"] = std::move(units);
  doc["output"] = net.output;
  return doc;
}

inline std::string dump_network(const NetworkSpec& net) { return network_to_json(net).dump(2) + "\n"; }

// Copy of `net` with one parameter moved to `value` (snapped to its kind).
inline NetworkSpec substitute_param(const NetworkSpec& net, std::string_view id, double value) {
  auto idx = net.find_param(id);
  if (!idx) throw ConfigError("substitute: unknown parameter '" + std::string(id) + "'");
  NetworkSpec out = net;
  ParamSpec& p = out.params[static_cast<std::size_t>(*idx)];
  double v = snap_to_kind(p, value);
  if (!std::isfinite(v) || !p.within_bounds(v))
    throw ConfigError("substitute: value for '" + p.id + "' outside hard bounds");
  p.value = v;
  out.validate();
  return out;
}

// Effective scan margin of a temporal unit.
inline int scan_margin_of(const UnitSpec& u, const ParamSpec& tc) {
  return u.scan_margin ? *u.scan_margin : TimeConstParam::default_scan_margin(tc);
}

}  // namespace sdl
