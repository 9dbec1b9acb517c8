#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sdl/aggregate.hpp"
#include "sdl/dataset.hpp"
#include "sdl/error.hpp"
#include "sdl/network.hpp"
#include "sdl/scorecore.hpp"
#include "sdl/temporal.hpp"

namespace sdl {

enum class Outcome { TP, FP, FN, TN };

inline const char* to_string(Outcome c) {
  switch (c) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::FN: return "FN";
    case Outcome::TN: return "TN";
  }
  return "?";
}

inline std::optional<Outcome> outcome_from(std::string_view s) {
  for (auto c : {Outcome::TP, Outcome::FP, Outcome::FN, Outcome::TN})
    if (s == to_string(c)) return c;
  return std::nullopt;
}

inline Outcome classify(bool decision, bool label) {
  if (decision) return label ? Outcome::TP : Outcome::FP;
  return label ? Outcome::FN : Outcome::TN;
}

// Relative cost of the two error kinds.
struct ClassWeights {
  double w_fp = 1.0;
  double w_fn = 1.0;

  void validate() const {
    if (!(w_fp > 0) || !(w_fn > 0)) throw ConfigError("class weights must be positive");
  }
};

struct OutcomeCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(Outcome c) {
    switch (c) {
      case Outcome::TP: ++tp; break;
      case Outcome::FP: ++fp; break;
      case Outcome::FN: ++fn; break;
      case Outcome::TN: ++tn; break;
    }
  }
  std::int64_t total() const { return tp + fp + fn + tn; }
  std::int64_t errors() const { return fp + fn; }
  double weighted_error(const ClassWeights& w) const {
    return w.w_fp * static_cast<double>(fp) + w.w_fn * static_cast<double>(fn);
  }
  bool operator==(const OutcomeCounts&) const = default;
};

struct LoggedAttribution {
  std::string param;
  double alternate = 0.0;
  double margin = 0.0;
  bool rotated = false;
  bool operator==(const LoggedAttribution&) const = default;
};

struct LogEntry {
  std::string frame_id;
  bool decision = false;
  bool label = false;
  Outcome outcome = Outcome::TN;
  double score = 0.0;
  std::optional<LoggedAttribution> attribution;
  bool operator==(const LogEntry&) const = default;
};

struct DecisionLog {
  std::vector<LogEntry> entries;

  OutcomeCounts counts() const {
    OutcomeCounts c;
    for (const auto& e : entries) c.add(e.outcome);
    return c;
  }
  bool operator==(const DecisionLog&) const = default;
};

// Temporal state and scratch space for one episode's timeline.
struct EpisodeState {
  bool started = false;
  std::uint32_t episode = 0;
  std::int64_t last_t = 0;
  std::vector<WindowState> windows;
  std::vector<Score> object_out;
  std::vector<Score> frame_out;
  std::vector<Score> gather;
  std::vector<double> samples;
};

// A network bound to one dataset schema, ready for per-frame evaluation.
class CompiledNetwork {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  CompiledNetwork(const NetworkSpec& net, const Schema& schema) : net_(net) {
    units_.resize(net.units.size());
    for (std::size_t i = 0; i < net.units.size(); ++i) {
      const UnitSpec& u = net.units[i];
      Unit& c = units_[i];
      c.spec = &net_.units[i];
      if (!u.param.empty()) c.param = *net.find_param(u.param);
      for (const auto& in : u.inputs) c.inputs.push_back(*net.find_unit(in));
      if (!u.feature.empty()) {
        const NameTable& table =
            (u.scope == Scope::object || u.type == UnitType::fraction) ? schema.object_features : schema.frame_features;
        auto fi = table.find(u.feature);
        if (fi)
          c.feature = *fi;
        else if (!u.default_value)
          throw EvalError("unit '" + u.id + "': missing feature '" + u.feature + "'");
      }
      if (u.type == UnitType::region) {
        auto mi = schema.masks.find(u.mask);
        if (!mi) throw EvalError("unit '" + u.id + "': missing mask '" + u.mask + "'");
        c.mask = *mi;
        for (std::size_t k = 0; k < 4; ++k) c.bounds[k] = *net.find_param(u.bounds[k]);
      }
      if (u.is_temporal()) {
        c.window = n_windows_++;
        const ParamSpec& p = param(c.param);
        c.scan_margin = scan_margin_of(u, p);
      }
    }
    for (std::size_t i : net.order) (net.units[i].scope == Scope::object ? object_order_ : frame_order_).push_back(i);
    output_ = *net.find_unit(net.output);
  }

  CompiledNetwork(const CompiledNetwork&) = delete;
  CompiledNetwork& operator=(const CompiledNetwork&) = delete;
  CompiledNetwork(CompiledNetwork&&) = default;

  const NetworkSpec& spec() const { return net_; }
  std::size_t unit_count() const { return units_.size(); }

  EpisodeState make_state() const {
    EpisodeState st;
    for (const Unit& u : units_)
      if (u.window >= 0) {
        TimeConstParam tc{param(u.param), u.scan_margin};
        st.windows.emplace_back(static_cast<std::size_t>(tc.length() + tc.scan_margin + 1));
      }
    st.frame_out.resize(units_.size());
    return st;
  }

  // Evaluate one frame; a frame from another episode resets temporal state.
  // Returns the output unit's score; every unit's frame-level score stays in
  // st.frame_out.
  Score eval_frame(const Frame& f, EpisodeState& st) const {
    if (!st.started || st.episode != f.episode) {
      for (auto& w : st.windows) w.reset();
      st.started = true;
      st.episode = f.episode;
    } else if (f.t != st.last_t + 1) {
      throw EvalError("non-contiguous timestamps: t=" + std::to_string(f.t) + " follows t=" +
                      std::to_string(st.last_t));
    }
    st.last_t = f.t;

    const std::size_t n_units = units_.size();
    const std::size_t n_obj = f.objects.size();
    st.object_out.resize(n_obj * n_units);
    for (std::size_t o = 0; o < n_obj; ++o) {
      Score* out = st.object_out.data() + o * n_units;
      for (std::size_t ui : object_order_) out[ui] = eval_object_unit(ui, f, o, out, st);
    }
    for (std::size_t ui : frame_order_) st.frame_out[ui] = eval_frame_unit(ui, f, st);
    return st.frame_out[output_];
  }

  const ParamSpec& param(ParamIndex i) const { return net_.params[static_cast<std::size_t>(i)]; }

 private:
  struct Unit {
    const UnitSpec* spec = nullptr;
    ParamIndex param = -1;
    std::vector<std::size_t> inputs;
    std::size_t feature = npos;
    std::size_t mask = npos;
    std::array<ParamIndex, 4> bounds{};
    int window = -1;
    int scan_margin = 0;
  };

  double feature_value(const Unit& u, double raw) const {
    if (!std::isnan(raw)) return raw;
    if (u.spec->default_value) return *u.spec->default_value;
    throw EvalError("unit '" + u.spec->id + "': missing feature '" + u.spec->feature + "'");
  }

  ThresholdOptions topt(const Unit& u) const { return {net_.bins_per_side, u.spec->id}; }

  Score eval_object_unit(std::size_t ui, const Frame& f, std::size_t obj, const Score* out, EpisodeState& st) const {
    const Unit& u = units_[ui];
    switch (u.spec->type) {
      case UnitType::above:
      case UnitType::below: {
        double raw = u.feature == npos ? kMissing : f.object_feature(obj, u.feature);
        double x = feature_value(u, raw);
        return u.spec->type == UnitType::above ? eval_threshold_above(x, param(u.param), topt(u))
                                               : eval_threshold_below(x, param(u.param), topt(u));
      }
      case UnitType::and_gate:
      case UnitType::or_gate: {
        st.gather.clear();
        for (std::size_t in : u.inputs) st.gather.push_back(out[in]);
        return u.spec->type == UnitType::and_gate ? gate_and(st.gather) : gate_or(st.gather);
      }
      default: break;
    }
    throw EvalError("unit '" + u.spec->id + "': not valid at object level");
  }

  Score eval_frame_unit(std::size_t ui, const Frame& f, EpisodeState& st) const {
    const Unit& u = units_[ui];
    const UnitSpec& s = *u.spec;
    switch (s.type) {
      case UnitType::above:
      case UnitType::below: {
        double x = feature_value(u, u.feature == npos ? kMissing : f.feature(u.feature));
        return s.type == UnitType::above ? eval_threshold_above(x, param(u.param), topt(u))
                                         : eval_threshold_below(x, param(u.param), topt(u));
      }
      case UnitType::and_gate:
      case UnitType::or_gate: {
        st.gather.clear();
        for (std::size_t in : u.inputs) st.gather.push_back(st.frame_out[in]);
        return s.type == UnitType::and_gate ? gate_and(st.gather) : gate_or(st.gather);
      }
      case UnitType::smooth:
      case UnitType::mono: {
        TimeConstParam tc{param(u.param), u.scan_margin};
        TemporalOptions opt{s.rotate_blame};
        WindowState& w = st.windows[static_cast<std::size_t>(u.window)];
        const Score& in = st.frame_out[u.inputs.front()];
        return s.type == UnitType::smooth ? smooth_and(w, in, tc, opt) : monostable(w, in, tc, opt);
      }
      case UnitType::count: {
        st.gather.clear();
        const std::size_t n_units = units_.size();
        std::size_t src = u.inputs.front();
        for (std::size_t o = 0; o < f.objects.size(); ++o) st.gather.push_back(st.object_out[o * n_units + src]);
        return count_at_least(st.gather, param(u.param), {net_.bins_per_side, s.id});
      }
      case UnitType::fraction: {
        st.samples.clear();
        for (std::size_t o = 0; o < f.objects.size(); ++o)
          st.samples.push_back(feature_value(u, u.feature == npos ? kMissing : f.object_feature(o, u.feature)));
        return fraction_below(st.samples, s.cut, param(u.param), {net_.bins_per_side, s.id});
      }
      case UnitType::region: {
        const MaskGrid* m = f.mask(u.mask);
        if (!m) throw EvalError("unit '" + s.id + "': missing mask '" + s.mask + "'");
        RegionSpec r{param(u.bounds[kX0]), param(u.bounds[kX1]), param(u.bounds[kY0]), param(u.bounds[kY1]),
                     param(u.param)};
        return region_count(*m, r, {net_.bins_per_side, s.id});
      }
    }
    throw EvalError("unit '" + s.id + "': unknown type");
  }

  NetworkSpec net_;
  std::vector<Unit> units_;
  std::vector<std::size_t> object_order_;
  std::vector<std::size_t> frame_order_;
  std::size_t output_ = 0;
  int n_windows_ = 0;
};

// Output scores for the frames [begin, end) of one episode, starting from
// fresh temporal state.
inline std::vector<Score> eval_episode(const CompiledNetwork& net, const Dataset& ds, std::size_t begin,
                                       std::size_t end) {
  EpisodeState st = net.make_state();
  std::vector<Score> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    try {
      out.push_back(net.eval_frame(ds.frames[i], st));
    } catch (const EvalError& e) {
      throw EvalError("frame " + ds.frame_id(i) + ": " + e.what());
    }
  }
  return out;
}

inline LogEntry make_log_entry(const NetworkSpec& net, const Dataset& ds, std::size_t i, const Score& s) {
  LogEntry e;
  e.frame_id = ds.frame_id(i);
  e.decision = s.decision();
  e.label = ds.frames[i].label;
  e.outcome = classify(e.decision, e.label);
  e.score = s.s;
  if (s.attribution) {
    const Attribution& a = *s.attribution;
    e.attribution = LoggedAttribution{net.params[static_cast<std::size_t>(a.param)].id, a.alternate, a.margin,
                                      a.rotated};
  }
  return e;
}

inline void check_episode_grouping(const Dataset& ds) {
  std::vector<bool> seen(ds.episodes.size(), false);
  for (const auto& [b, e] : ds.episode_ranges()) {
    std::uint32_t ep = ds.frames[b].episode;
    if (seen[ep]) throw EvalError("episode '" + ds.episodes[ep] + "' is split across the dataset");
    seen[ep] = true;
  }
}

// Evaluate every episode in order. Episodes are independent, so the result
// does not depend on how episodes are ordered relative to each other.
inline DecisionLog eval_dataset(const NetworkSpec& net, const Dataset& ds) {
  DecisionLog log;
  if (ds.frames.empty()) return log;
  check_episode_grouping(ds);
  CompiledNetwork compiled(net, ds.schema);
  log.entries.reserve(ds.frames.size());
  for (const auto& [b, e] : ds.episode_ranges()) {
    std::vector<Score> out = eval_episode(compiled, ds, b, e);
    for (std::size_t i = b; i < e; ++i) log.entries.push_back(make_log_entry(net, ds, i, out[i - b]));
  }
  return log;
}

}  // namespace sdl
