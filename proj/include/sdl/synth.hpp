#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdl/dataset.hpp"
#include "sdl/error.hpp"
#include "sdl/evaluator.hpp"
#include "sdl/network.hpp"

namespace sdl {

struct Perturbation {
  std::string param;
  // Signed shift in units of the tolerance on that side.
  double fraction = 0.0;
};

struct FeatureTuning {
  // Chance a target object's value lands outside the pass range.
  double fail = 0.005;
  // Chance a value is drawn inside a tolerance band rather than well clear.
  double band = 0.3;
};

struct ScenarioConfig {
  std::string name = "scenario";
  // Reference network; empty means the caller supplies one.
  std::string network;
  int episodes = 50;
  int frames_per_episode = 2000;
  // Latent "target present" segments.
  double p_enter = 0.01;
  double p_exit = 0.01;
  // Per-frame glitches inside segments.
  double dropout = 0.08;
  double spurious = 0.04;
  // Frame-level condition segments (pass vs fail of each frame test).
  double scene_switch = 0.01;
  double scene_pass = 0.85;
  int max_distractors = 3;
  int mask_width = 16;
  int mask_height = 12;
  double label_noise = 0.0;
  FeatureTuning defaults;
  std::map<std::string, FeatureTuning> features;
  // Random perturbation: `perturb_count` parameters shifted by a fraction of
  // their tolerance drawn from [perturb_min_fraction, perturb_max_fraction].
  int perturb_count = 0;
  double perturb_min_fraction = 0.25;
  double perturb_max_fraction = 0.75;
  std::vector<std::string> perturb_candidates;
  std::vector<Perturbation> perturbations;

  void validate() const {
    if (episodes < 1 || frames_per_episode < 1) throw ConfigError("scenario: episodes and frames must be >= 1");
    auto prob = [](double p, const char* what) {
      if (!(p >= 0 && p <= 1)) throw ConfigError(std::string("scenario: ") + what + " must be in [0, 1]");
    };
    prob(p_enter, "p_enter");
    prob(p_exit, "p_exit");
    prob(dropout, "dropout");
    prob(spurious, "spurious");
    prob(scene_switch, "scene_switch");
    prob(scene_pass, "scene_pass");
    prob(label_noise, "label_noise");
    prob(defaults.fail, "fail");
    prob(defaults.band, "band");
    for (const auto& [k, f] : features) {
      prob(f.fail, "fail");
      prob(f.band, "band");
    }
    if (mask_width < 1 || mask_height < 1) throw ConfigError("scenario: mask size must be >= 1");
    if (max_distractors < 0) throw ConfigError("scenario: max_distractors must be >= 0");
    if (perturb_count < 0) throw ConfigError("scenario: perturb_count must be >= 0");
    if (!(perturb_min_fraction >= 0 && perturb_min_fraction <= perturb_max_fraction))
      throw ConfigError("scenario: perturbation fractions must satisfy 0 <= min <= max");
    if (perturb_max_fraction > 1) throw ConfigError("scenario: perturbation beyond tolerance requested");
    for (const auto& p : perturbations)
      if (!(std::abs(p.fraction) <= 1))
        throw ConfigError("scenario: perturbation of '" + p.param + "' beyond tolerance requested");
  }
};

inline FeatureTuning feature_tuning_from(const nlohmann::json& j, FeatureTuning base) {
  base.fail = j.value("fail", base.fail);
  base.band = j.value("band", base.band);
  return base;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  static const std::set<std::string> known{"name", "network", "episodes", "frames_per_episode", "p_enter", "p_exit",
                                           "dropout", "spurious", "scene_switch", "scene_pass", "max_distractors",
                                           "mask", "label_noise", "defaults", "features", "perturb"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("scenario: unknown key '" + k + "'");
  ScenarioConfig c;
  try {
    c.name = j.value("name", c.name);
    c.network = j.value("network", c.network);
    c.episodes = j.value("episodes", c.episodes);
    c.frames_per_episode = j.value("frames_per_episode", c.frames_per_episode);
    c.p_enter = j.value("p_enter", c.p_enter);
    c.p_exit = j.value("p_exit", c.p_exit);
    c.dropout = j.value("dropout", c.dropout);
    c.spurious = j.value("spurious", c.spurious);
    c.scene_switch = j.value("scene_switch", c.scene_switch);
    c.scene_pass = j.value("scene_pass", c.scene_pass);
    c.max_distractors = j.value("max_distractors", c.max_distractors);
    c.label_noise = j.value("label_noise", c.label_noise);
    if (j.contains("mask")) {
      c.mask_width = j.at("mask").value("width", c.mask_width);
      c.mask_height = j.at("mask").value("height", c.mask_height);
    }
    if (j.contains("defaults")) c.defaults = feature_tuning_from(j.at("defaults"), c.defaults);
    if (j.contains("features"))
      for (const auto& [k, v] : j.at("features").items()) c.features[k] = feature_tuning_from(v, c.defaults);
    if (j.contains("perturb")) {
      const auto& p = j.at("perturb");
      c.perturb_count = p.value("count", c.perturb_count);
      c.perturb_min_fraction = p.value("min_fraction", c.perturb_min_fraction);
      c.perturb_max_fraction = p.value("max_fraction", c.perturb_max_fraction);
      if (p.contains("candidates")) c.perturb_candidates = p.at("candidates").get<std::vector<std::string>>();
      if (p.contains("explicit"))
        for (const auto& e : p.at("explicit"))
          c.perturbations.push_back({e.at("param").get<std::string>(), e.at("fraction").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario '" + path + "'");
  try {
    return scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct SynthResult {
  Dataset dataset;
  NetworkSpec reference;
  std::optional<NetworkSpec> perturbed;
  std::vector<Perturbation> applied;
  // Labels flipped away from the reference decision by label noise.
  std::int64_t noisy_labels = 0;
  // Reference decisions that came out true.
  std::int64_t positives = 0;
};

namespace detail {

// Uniform doubles from raw engine output so streams match across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  bool chance(double p) { return uniform() < p; }
  int below(int n) { return n <= 0 ? 0 : static_cast<int>(eng_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 eng_;
};

inline double quantize(double v) { return std::round(v * 1000.0) / 1000.0; }

// One scalar test on a feature: pass when x >= value (above) or x < value.
struct Bound {
  bool above = true;
  const ParamSpec* param = nullptr;
};

struct FeaturePlan {
  std::string name;
  std::vector<Bound> bounds;
  FeatureTuning tuning;

  // Range of values that pass every bound by more than its tolerance.
  std::pair<double, double> clear_range() const {
    double lo = -HUGE_VAL, hi = HUGE_VAL, span = 0;
    for (const auto& b : bounds) {
      const ParamSpec& p = *b.param;
      span = std::max(span, p.tol_neg + p.tol_pos);
      if (b.above)
        lo = std::max(lo, p.value + p.tol_pos);
      else
        hi = std::min(hi, p.value - p.tol_neg);
    }
    if (!std::isfinite(lo)) lo = hi - 2 * span;
    if (!std::isfinite(hi)) hi = lo + 2 * span;
    return {lo, hi};
  }

  double clear_pass(Rng& rng) const {
    auto [lo, hi] = clear_range();
    return lo < hi ? rng.uniform(lo, hi) : 0.5 * (lo + hi);
  }

  double in_band(const Bound& b, Rng& rng) const {
    return rng.uniform(b.param->value - b.param->tol_neg, b.param->value + b.param->tol_pos);
  }
  double clear_fail(const Bound& b, Rng& rng) const {
    const ParamSpec& p = *b.param;
    return b.above ? rng.uniform(p.value - 2 * p.tol_neg, p.value - p.tol_neg)
                   : rng.uniform(p.value + p.tol_pos, p.value + 2 * p.tol_pos);
  }

  enum class Draw { pass, band, fail };

  double sample(Rng& rng, Draw how) const {
    if (bounds.empty()) return quantize(rng.uniform());
    const Bound& b = bounds[static_cast<std::size_t>(rng.below(static_cast<int>(bounds.size())))];
    double v = how == Draw::pass ? clear_pass(rng) : how == Draw::band ? in_band(b, rng) : clear_fail(b, rng);
    v = std::clamp(v, b.param->lo, b.param->hi);
    return quantize(v);
  }
};

struct FractionPlan {
  std::string feature;
  double cut = 0.0;
  const ParamSpec* param = nullptr;
};

struct RegionPlan {
  std::string mask;
  std::array<const ParamSpec*, 4> bounds{};
  const ParamSpec* threshold = nullptr;
  int width = 0;
  int height = 0;
};

struct Plan {
  std::vector<FeaturePlan> object;
  std::vector<FeaturePlan> frame;
  std::vector<FractionPlan> fractions;
  std::vector<RegionPlan> regions;
  int target_count = 1;
};

inline Plan make_plan(const NetworkSpec& net, const ScenarioConfig& cfg) {
  Plan plan;
  std::map<std::string, std::size_t> obj_idx, frame_idx;
  auto tuning = [&](const std::string& f) {
    auto it = cfg.features.find(f);
    return it == cfg.features.end() ? cfg.defaults : it->second;
  };
  for (const auto& u : net.units) {
    const ParamSpec* p = u.param.empty() ? nullptr : &net.param(u.param);
    if (u.type == UnitType::above || u.type == UnitType::below) {
      auto& idx = u.scope == Scope::object ? obj_idx : frame_idx;
      auto& list = u.scope == Scope::object ? plan.object : plan.frame;
      auto [it, added] = idx.emplace(u.feature, list.size());
      if (added) list.push_back({u.feature, {}, tuning(u.feature)});
      list[it->second].bounds.push_back({u.type == UnitType::above, p});
    } else if (u.type == UnitType::fraction) {
      plan.fractions.push_back({u.feature, u.cut, p});
    } else if (u.type == UnitType::region) {
      RegionPlan r;
      r.mask = u.mask;
      for (std::size_t k = 0; k < 4; ++k) r.bounds[k] = &net.param(u.bounds[k]);
      r.threshold = p;
      r.width = cfg.mask_width;
      r.height = cfg.mask_height;
      plan.regions.push_back(r);
    } else if (u.type == UnitType::count) {
      plan.target_count = std::max(plan.target_count, static_cast<int>(p->value));
    }
  }
  return plan;
}

}  // namespace detail

inline std::vector<Perturbation> choose_perturbations(const NetworkSpec& net, const ScenarioConfig& cfg,
                                                      detail::Rng& rng) {
  std::vector<Perturbation> out = cfg.perturbations;
  if (cfg.perturb_count == 0) return out;
  std::vector<std::string> pool = cfg.perturb_candidates;
  if (pool.empty())
    for (const auto& p : net.params) pool.push_back(p.id);
  // Integer parameters need a whole-number shift that stays inside the
  // allowed fraction of their tolerance.
  auto eligible = [&](const std::string& id) {
    const ParamSpec& p = net.param(id);
    if (!p.is_integer()) return true;
    return std::floor(cfg.perturb_max_fraction * std::min(p.tol_neg, p.tol_pos)) >= 1;
  };
  std::erase_if(pool, [&](const std::string& id) {
    if (!net.find_param(id)) throw ConfigError("scenario: unknown perturbation candidate '" + id + "'");
    if (!eligible(id)) return true;
    for (const auto& e : out)
      if (e.param == id) return true;
    return false;
  });
  for (int n = 0; n < cfg.perturb_count && !pool.empty(); ++n) {
    auto pick = static_cast<std::size_t>(rng.below(static_cast<int>(pool.size())));
    double f = rng.uniform(cfg.perturb_min_fraction, cfg.perturb_max_fraction) * (rng.chance(0.5) ? 1 : -1);
    out.push_back({pool[pick], f});
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

// Shift the listed parameters; integer shifts round toward zero but move at
// least one step.
inline NetworkSpec apply_perturbations(const NetworkSpec& net, const std::vector<Perturbation>& list) {
  NetworkSpec out = net;
  for (const auto& pt : list) {
    if (!(std::abs(pt.fraction) <= 1))
      throw ConfigError("perturbation of '" + pt.param + "' beyond tolerance requested");
    ParamSpec& p = out.param(pt.param);
    double tol = pt.fraction >= 0 ? p.tol_pos : p.tol_neg;
    double shift = pt.fraction * tol;
    if (p.is_integer()) shift = shift >= 0 ? std::max(1.0, std::floor(shift)) : std::min(-1.0, std::ceil(shift));
    if (std::abs(shift) > tol) throw ConfigError("perturbation of '" + pt.param + "' beyond tolerance requested");
    double v = p.value + shift;
    if (!p.within_bounds(v)) throw ConfigError("perturbation of '" + pt.param + "' leaves its hard bounds");
    p.value = v;
  }
  out.validate();
  return out;
}

namespace detail {

inline MaskGrid make_glare(const RegionPlan& r, bool glare, Rng& rng) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height), 0);
  auto set = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < r.width && y < r.height) bits[static_cast<std::size_t>(y) * r.width + x] = 1;
  };
  for (int i = rng.below(4); i > 0; --i) set(rng.below(r.width), rng.below(r.height));
  if (glare) {
    // A blob sized around the count threshold, placed so it often straddles
    // one of the region edges.
    const double t = r.threshold->value;
    double want = std::max(1.0, rng.uniform(t - 1.5 * r.threshold->tol_neg, t + 1.5 * r.threshold->tol_pos));
    int bw = 2 + rng.below(5);
    int bh = std::max(1, static_cast<int>(std::ceil(want / bw)));
    int x0 = static_cast<int>(r.bounds[kX0]->value), x1 = static_cast<int>(r.bounds[kX1]->value);
    int y0 = static_cast<int>(r.bounds[kY0]->value), y1 = static_cast<int>(r.bounds[kY1]->value);
    int cx = rng.chance(0.5) ? x0 - bw / 2 - 2 + rng.below(5) : rng.chance(0.5) ? x1 - bw / 2 - 2 + rng.below(5)
                                                                                 : x0 + rng.below(std::max(1, x1 - x0));
    int cy = rng.chance(0.3) ? y0 - bh / 2 - 1 + rng.below(3) : rng.chance(0.3) ? y1 - bh / 2 - 1 + rng.below(3)
                                                                               : y0 + rng.below(std::max(1, y1 - y0 - bh + 1));
    for (int y = cy; y < cy + bh; ++y)
      for (int x = cx; x < cx + bw; ++x) set(x, y);
  }
  return MaskGrid(r.width, r.height, bits);
}

}  // namespace detail

// Generate a labeled dataset whose labels are the reference network's own
// decisions (before label noise), plus an optional perturbed network.
inline SynthResult synth_dataset(const NetworkSpec& reference, const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkSpec ref = reference;
  ref.validate();
  detail::Rng rng(seed);
  SynthResult out;
  out.reference = ref;
  out.applied = choose_perturbations(ref, cfg, rng);
  if (!out.applied.empty()) out.perturbed = apply_perturbations(ref, out.applied);

  detail::Plan plan = detail::make_plan(ref, cfg);
  Dataset& ds = out.dataset;
  std::vector<std::size_t> obj_slot, frame_slot, frac_slot, mask_slot;
  for (const auto& f : plan.object) obj_slot.push_back(ds.schema.object_features.intern(f.name));
  for (const auto& f : plan.fractions) frac_slot.push_back(ds.schema.object_features.intern(f.feature));
  for (const auto& f : plan.frame) frame_slot.push_back(ds.schema.frame_features.intern(f.name));
  for (const auto& r : plan.regions) mask_slot.push_back(ds.schema.masks.intern(r.mask));

  CompiledNetwork compiled(ref, ds.schema);
  ds.frames.reserve(static_cast<std::size_t>(cfg.episodes) * static_cast<std::size_t>(cfg.frames_per_episode));
  const int width = std::max(3, static_cast<int>(std::log10(std::max(1, cfg.episodes - 1))) + 1);

  for (int e = 0; e < cfg.episodes; ++e) {
    std::string name = std::to_string(e);
    name = "ep" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(name.size()))), '0') + name;
    const auto ep = ds.episode_index(name);
    EpisodeState st = compiled.make_state();
    bool present = rng.chance(0.3);
    std::vector<bool> frame_ok(plan.frame.size()), frac_ok(plan.fractions.size()), glare_ok(plan.regions.size());
    auto redraw_scene = [&](auto& v) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.chance(cfg.scene_pass);
    };
    redraw_scene(frame_ok);
    redraw_scene(frac_ok);
    redraw_scene(glare_ok);

    for (int t = 0; t < cfg.frames_per_episode; ++t) {
      if (rng.chance(present ? cfg.p_exit : cfg.p_enter)) present = !present;
      if (rng.chance(cfg.scene_switch)) redraw_scene(frame_ok);
      if (rng.chance(cfg.scene_switch)) redraw_scene(frac_ok);
      if (rng.chance(cfg.scene_switch)) redraw_scene(glare_ok);

      Frame f;
      f.episode = ep;
      f.t = t;
      const int n = plan.target_count;
      int targets = present ? (rng.chance(cfg.dropout) ? n - 1 : n + rng.below(2))
                            : (rng.chance(cfg.spurious) ? n : rng.below(n));
      targets = std::max(0, targets);
      int distractors = rng.below(cfg.max_distractors + 1);
      if (targets + distractors == 0) distractors = 1;
      const std::size_t n_obj = static_cast<std::size_t>(targets + distractors);
      const std::size_t width_obj = ds.schema.object_features.size();
      f.objects.assign(n_obj, std::vector<double>(width_obj, kMissing));
      using Draw = detail::FeaturePlan::Draw;
      const int n_feat = static_cast<int>(plan.object.size());
      for (std::size_t o = 0; o < n_obj; ++o) {
        // Targets pass everything except possibly one feature drawn near its
        // band; distractors fail one feature, clearly or inside the band.
        const bool target = static_cast<int>(o) < targets;
        const int focus = rng.below(n_feat);
        Draw focus_draw = Draw::pass;
        if (n_feat == 0)
          break;
        else if (!target)
          focus_draw = rng.chance(0.5) ? Draw::band : Draw::fail;
        else if (rng.chance(plan.object[static_cast<std::size_t>(focus)].tuning.band))
          focus_draw = Draw::band;
        else if (rng.chance(plan.object[static_cast<std::size_t>(focus)].tuning.fail))
          focus_draw = Draw::fail;
        for (int k = 0; k < n_feat; ++k) {
          const auto& fp = plan.object[static_cast<std::size_t>(k)];
          Draw d = k == focus ? focus_draw : rng.chance(fp.tuning.fail) ? Draw::fail : Draw::pass;
          f.objects[o][obj_slot[static_cast<std::size_t>(k)]] = fp.sample(rng, d);
        }
      }
      for (std::size_t k = 0; k < plan.fractions.size(); ++k) {
        const auto& fp = plan.fractions[k];
        double pct = frac_ok[k] ? rng.uniform(fp.param->value - fp.param->tol_neg, 100.0)
                                : rng.uniform(0.0, fp.param->value + fp.param->tol_pos);
        for (std::size_t o = 0; o < n_obj; ++o) {
          bool dim = rng.uniform() * 100.0 < pct;
          double v = dim ? rng.uniform(std::max(0.0, fp.cut - 50), fp.cut - 1) : rng.uniform(fp.cut + 1, fp.cut + 150);
          f.objects[o][frac_slot[k]] = detail::quantize(v);
        }
      }
      f.features.assign(ds.schema.frame_features.size(), kMissing);
      for (std::size_t k = 0; k < plan.frame.size(); ++k) {
        const auto& fp = plan.frame[k];
        Draw d = rng.chance(fp.tuning.band) ? Draw::band : frame_ok[k] ? Draw::pass : Draw::fail;
        f.features[frame_slot[k]] = fp.sample(rng, d);
      }
      f.masks.resize(ds.schema.masks.size());
      for (std::size_t k = 0; k < plan.regions.size(); ++k)
        f.masks[mask_slot[k]] = detail::make_glare(plan.regions[k], glare_ok[k] && rng.chance(0.9), rng);

      const bool decision = compiled.eval_frame(f, st).decision();
      f.label = decision;
      if (cfg.label_noise > 0 && rng.chance(cfg.label_noise)) {
        f.label = !f.label;
        ++out.noisy_labels;
      }
      out.positives += decision ? 1 : 0;
      ds.frames.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace sdl
