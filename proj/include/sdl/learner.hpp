#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sdl/error.hpp"
#include "sdl/evaluator.hpp"
#include "sdl/network.hpp"
#include "sdl/param.hpp"

namespace sdl {

struct LearnerConfig {
  ClassWeights weights;
  std::int64_t min_fix = 10;
  int max_rounds = 10;
  // Overrides the network's bin count when set.
  std::optional<int> bins_per_side;
  double update_fraction = 0.9;
  double tolerance_fraction = 0.9;
  double tolerance_factor = 2.5;

  void validate() const {
    weights.validate();
    if (min_fix < 0) throw ConfigError("min_fix must be >= 0");
    if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    if (bins_per_side && *bins_per_side < 1) throw ConfigError("bins_per_side must be >= 1");
    if (!(update_fraction > 0 && update_fraction <= 1)) throw ConfigError("update_fraction must be in (0, 1]");
    if (!(tolerance_fraction > 0 && tolerance_fraction <= 1))
      throw ConfigError("tolerance_fraction must be in (0, 1]");
    if (!(tolerance_factor > 0) || !std::isfinite(tolerance_factor))
      throw ConfigError("tolerance_factor must be positive");
  }
};

inline LearnerConfig learner_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("learner config must be a JSON object");
  static const std::set<std::string> known{"w_fp", "w_fn", "min_fix", "max_rounds", "bins_per_side",
                                           "update_fraction", "tolerance_fraction", "tolerance_factor"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("learner config: unknown key '" + k + "'");
  LearnerConfig c;
  try {
    c.weights.w_fp = j.value("w_fp", c.weights.w_fp);
    c.weights.w_fn = j.value("w_fn", c.weights.w_fn);
    c.min_fix = j.value("min_fix", c.min_fix);
    c.max_rounds = j.value("max_rounds", c.max_rounds);
    if (j.contains("bins_per_side")) c.bins_per_side = j.at("bins_per_side").get<int>();
    c.update_fraction = j.value("update_fraction", c.update_fraction);
    c.tolerance_fraction = j.value("tolerance_fraction", c.tolerance_fraction);
    c.tolerance_factor = j.value("tolerance_factor", c.tolerance_factor);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("learner config: ") + e.what());
  }
  c.validate();
  return c;
}

inline LearnerConfig load_learner_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open learner config '" + path + "'");
  try {
    return learner_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline nlohmann::ordered_json learner_config_to_json(const LearnerConfig& c) {
  nlohmann::ordered_json j;
  j["w_fp"] = c.weights.w_fp;
  j["w_fn"] = c.weights.w_fn;
  j["min_fix"] = c.min_fix;
  j["max_rounds"] = c.max_rounds;
  if (c.bins_per_side) j["bins_per_side"] = *c.bins_per_side;
  j["update_fraction"] = c.update_fraction;
  j["tolerance_fraction"] = c.tolerance_fraction;
  j["tolerance_factor"] = c.tolerance_factor;
  return j;
}

// Class counts of blamed events per alternate-value bin for one parameter.
struct ParamHistogram {
  ParamSpec param;
  BinGrid grid;
  std::vector<std::int64_t> tp, fp, fn, tn;

  ParamHistogram() = default;
  ParamHistogram(const ParamSpec& p, int bins_per_side)
      : param(p), grid(BinGrid::for_param(p, bins_per_side)) {
    auto n = static_cast<std::size_t>(grid.size());
    tp.assign(n, 0);
    fp.assign(n, 0);
    fn.assign(n, 0);
    tn.assign(n, 0);
  }

  std::vector<std::int64_t>& counts(Outcome c) {
    switch (c) {
      case Outcome::TP: return tp;
      case Outcome::FP: return fp;
      case Outcome::FN: return fn;
      case Outcome::TN: break;
    }
    return tn;
  }

  // Nearest bin to `v`, or nothing when `v` is off the band or is the origin.
  std::optional<int> bin_for(double v) const {
    if (!std::isfinite(v) || v == grid.origin()) return std::nullopt;
    double q = std::round((v - grid.origin()) / (v > grid.origin() ? grid.step_pos() : grid.step_neg()));
    if (q == 0 || q < grid.min_bin() || q > grid.max_bin()) return std::nullopt;
    return static_cast<int>(q);
  }

  std::int64_t at(const std::vector<std::int64_t>& v, int k) const { return v[static_cast<std::size_t>(grid.slot(k))]; }

  std::int64_t events() const {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) n += tp[i] + fp[i] + fn[i] + tn[i];
    return n;
  }

  bool operator==(const ParamHistogram& o) const {
    return param.id == o.param.id && param.value == o.param.value && tp == o.tp && fp == o.fp && fn == o.fn &&
           tn == o.tn;
  }
};

struct ParamHistograms {
  std::vector<ParamHistogram> params;

  static ParamHistograms empty_for(const NetworkSpec& net) {
    ParamHistograms h;
    for (const auto& p : net.params) h.params.emplace_back(p, net.bins_per_side);
    return h;
  }

  void merge(const ParamHistograms& other) {
    if (other.params.size() != params.size()) throw Error("merging histograms of different networks");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& a = params[i];
      const auto& b = other.params[i];
      if (a.param.id != b.param.id || a.tp.size() != b.tp.size())
        throw Error("merging histograms of different parameters");
      for (std::size_t k = 0; k < a.tp.size(); ++k) {
        a.tp[k] += b.tp[k];
        a.fp[k] += b.fp[k];
        a.fn[k] += b.fn[k];
        a.tn[k] += b.tn[k];
      }
    }
  }

  const ParamHistogram* find(const std::string& id) const {
    for (const auto& h : params)
      if (h.param.id == id) return &h;
    return nullptr;
  }

  bool operator==(const ParamHistograms&) const = default;
};

// Histogram every attributed decision of `log` by its suspect's alternate.
inline ParamHistograms accumulate(const DecisionLog& log, const NetworkSpec& net, std::size_t begin = 0,
                                  std::size_t end = SIZE_MAX) {
  ParamHistograms h = ParamHistograms::empty_for(net);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < net.params.size(); ++i) index.emplace(net.params[i].id, i);
  end = std::min(end, log.entries.size());
  for (std::size_t i = begin; i < end; ++i) {
    const LogEntry& e = log.entries[i];
    if (!e.attribution) continue;
    auto it = index.find(e.attribution->param);
    if (it == index.end())
      throw CorruptLogError("frame " + e.frame_id + ": alternate for unknown parameter '" + e.attribution->param + "'");
    ParamHistogram& ph = h.params[it->second];
    auto k = ph.bin_for(e.attribution->alternate);
    if (!k) continue;
    ph.counts(e.outcome)[static_cast<std::size_t>(ph.grid.slot(*k))] += 1;
  }
  return h;
}

// Combined benefit per bin and its outward running sums.
struct BenefitCurve {
  BinGrid grid;
  std::vector<double> benefit;
  std::vector<double> cumulative;
  // Running count of errors (FP + FN) fixed, unweighted.
  std::vector<std::int64_t> fixed;
  std::int64_t events = 0;
  // FP + FN over the whole band.
  std::int64_t errors = 0;

  double b(int k) const { return benefit[static_cast<std::size_t>(grid.slot(k))]; }
  double c(int k) const { return cumulative[static_cast<std::size_t>(grid.slot(k))]; }
  std::int64_t fixed_at(int k) const { return fixed[static_cast<std::size_t>(grid.slot(k))]; }
};

inline BenefitCurve benefit_curve(const ParamHistogram& h, const ClassWeights& w) {
  BenefitCurve out;
  out.grid = h.grid;
  const auto n = static_cast<std::size_t>(h.grid.size());
  out.benefit.assign(n, 0.0);
  out.cumulative.assign(n, 0.0);
  out.fixed.assign(n, 0);
  std::vector<std::int64_t> err(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    out.benefit[i] = w.w_fp * static_cast<double>(h.fp[i]) + w.w_fn * static_cast<double>(h.fn[i]) -
                     w.w_fn * static_cast<double>(h.tp[i]) - w.w_fp * static_cast<double>(h.tn[i]);
    err[i] = h.fp[i] + h.fn[i];
    out.errors += err[i];
  }
  out.events = h.events();
  const auto& g = h.grid;
  double c = 0;
  std::int64_t f = 0;
  for (int k = 1; k <= g.max_bin(); ++k) {
    auto s = static_cast<std::size_t>(g.slot(k));
    c += out.benefit[s];
    f += err[s];
    out.cumulative[s] = c;
    out.fixed[s] = f;
  }
  c = 0;
  f = 0;
  for (int k = -1; k >= g.min_bin(); --k) {
    auto s = static_cast<std::size_t>(g.slot(k));
    c += out.benefit[s];
    f += err[s];
    out.cumulative[s] = c;
    out.fixed[s] = f;
  }
  return out;
}

struct ValueProposal {
  int bin = 0;
  double value = 0.0;
  double benefit = 0.0;
  std::int64_t fixed = 0;
};

namespace detail {

// Bins in order of distance from the origin in parameter units; ties put the
// lower side first.
inline std::vector<int> bins_by_distance(const BinGrid& g) {
  std::vector<int> out;
  int lo = -1, hi = 1;
  while (lo >= g.min_bin() || hi <= g.max_bin()) {
    bool take_lo = lo >= g.min_bin() && (hi > g.max_bin() || g.distance(lo) <= g.distance(hi));
    out.push_back(take_lo ? lo-- : hi++);
  }
  return out;
}

}  // namespace detail

// The bin closest to the current value whose cumulative benefit reaches
// `update_fraction` of the maximum, if it fixes enough errors.
inline std::optional<ValueProposal> propose_update(const BenefitCurve& curve, const ParamSpec& p,
                                                   const LearnerConfig& cfg) {
  const auto& g = curve.grid;
  double best = 0;
  for (int k = g.min_bin(); k <= g.max_bin(); ++k)
    if (k != 0 && p.within_bounds(g.value_at(k))) best = std::max(best, curve.c(k));
  if (!(best > 0)) return std::nullopt;
  for (int k : detail::bins_by_distance(g)) {
    if (!p.within_bounds(g.value_at(k)) || curve.c(k) < cfg.update_fraction * best) continue;
    if (curve.fixed_at(k) < cfg.min_fix) return std::nullopt;
    return ValueProposal{k, g.value_at(k), curve.c(k), curve.fixed_at(k)};
  }
  return std::nullopt;
}

struct ToleranceProposal {
  int peak = 0;
  std::optional<int> drop_neg, drop_pos;
  double tol_neg = 0.0;
  double tol_pos = 0.0;
};

// New one-sided tolerances from where the cumulative benefit falls away from
// its peak. A side without a qualifying drop keeps its tolerance. Needs at
// least min_fix events and min_fix errors (and at least one error).
inline std::optional<ToleranceProposal> propose_tolerance(const BenefitCurve& curve, const ParamSpec& p,
                                                          const LearnerConfig& cfg) {
  if (curve.events < cfg.min_fix || curve.errors < std::max<std::int64_t>(1, cfg.min_fix)) return std::nullopt;
  const auto& g = curve.grid;
  int peak = 0;
  for (int k : detail::bins_by_distance(g))
    if (curve.c(k) > curve.c(peak)) peak = k;
  const double c_peak = curve.c(peak);

  auto scan = [&](int step) -> std::optional<int> {
    double c_min = c_peak;
    for (int k = peak + step; k >= g.min_bin() && k <= g.max_bin(); k += step) c_min = std::min(c_min, curve.c(k));
    if (!(c_peak - c_min > 0)) return std::nullopt;
    double target = c_peak - cfg.tolerance_fraction * (c_peak - c_min);
    for (int k = peak + step; k >= g.min_bin() && k <= g.max_bin(); k += step)
      if (curve.c(k) <= target) return k;
    return std::nullopt;
  };
  auto width = [&](int k) {
    double t = cfg.tolerance_factor * std::abs(g.value_at(k) - g.value_at(peak));
    return p.is_integer() ? std::max(1.0, std::round(t)) : t;
  };

  ToleranceProposal out;
  out.peak = peak;
  out.drop_neg = scan(-1);
  out.drop_pos = scan(+1);
  out.tol_neg = out.drop_neg ? width(*out.drop_neg) : p.tol_neg;
  out.tol_pos = out.drop_pos ? width(*out.drop_pos) : p.tol_pos;
  if (!(out.tol_neg > 0) || !(out.tol_pos > 0)) return std::nullopt;
  if (!out.drop_neg && !out.drop_pos) return std::nullopt;
  return out;
}

struct ParamReport {
  std::string id;
  ParamSpec before;
  ParamSpec after;
  ParamHistogram histogram;
  BenefitCurve curve;
  std::optional<ValueProposal> value;
  std::optional<ToleranceProposal> tolerance;
  bool vetoed = false;
  bool applied = false;
  // Why a gated proposal did not make it into the network.
  std::string rejected;
};

struct RoundReport {
  int round = 0;
  OutcomeCounts before;
  OutcomeCounts after;
  double error_before = 0.0;
  double error_after = 0.0;
  std::vector<ParamReport> params;

  int proposals() const {
    int n = 0;
    for (const auto& p : params) n += (p.value || p.tolerance) ? 1 : 0;
    return n;
  }
  int applied() const {
    int n = 0;
    for (const auto& p : params) n += p.applied ? 1 : 0;
    return n;
  }
};

struct RoundResult {
  NetworkSpec net;
  DecisionLog log;
  RoundReport report;
};

inline NetworkSpec with_bins(NetworkSpec net, const LearnerConfig& cfg) {
  if (cfg.bins_per_side) net.bins_per_side = *cfg.bins_per_side;
  return net;
}

// Histograms, curves and gated proposals for every parameter of `net`, given
// its log; nothing is applied.
inline std::vector<ParamReport> analyze_params(const NetworkSpec& net, const DecisionLog& log,
                                               const LearnerConfig& cfg, const std::set<std::string>& vetoes = {}) {
  std::vector<ParamReport> out;
  ParamHistograms hist = accumulate(log, net);
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const ParamSpec& p = net.params[i];
    ParamReport pr;
    pr.id = p.id;
    pr.before = p;
    pr.after = p;
    pr.histogram = hist.params[i];
    pr.curve = benefit_curve(pr.histogram, cfg.weights);
    pr.value = propose_update(pr.curve, p, cfg);
    pr.tolerance = propose_tolerance(pr.curve, p, cfg);
    pr.vetoed = vetoes.count(p.id) > 0;
    out.push_back(std::move(pr));
  }
  return out;
}

// One learning round: evaluate, histogram, propose, apply every gated
// proposal at once, and re-evaluate. `current` may carry the log of `net`
// on `ds` to skip the first evaluation.
inline RoundResult tune_round(const NetworkSpec& net_in, const Dataset& ds, const LearnerConfig& cfg,
                              const std::set<std::string>& vetoes = {}, const DecisionLog* current = nullptr,
                              int round = 1) {
  cfg.validate();
  NetworkSpec net = with_bins(net_in, cfg);
  net.validate();
  DecisionLog log = current ? *current : eval_dataset(net, ds);
  RoundReport rep;
  rep.round = round;
  rep.before = log.counts();
  rep.error_before = rep.before.weighted_error(cfg.weights);

  rep.params = analyze_params(net, log, cfg, vetoes);

  // Values first, then tolerances; a change that breaks a structural
  // constraint (for example a region collapsing) is rejected on its own.
  NetworkSpec next = net;
  auto try_apply = [&](ParamReport& pr, auto&& edit) {
    NetworkSpec trial = next;
    edit(trial.params[static_cast<std::size_t>(*trial.find_param(pr.id))]);
    try {
      trial.validate();
    } catch (const ConfigError& e) {
      pr.rejected = e.what();
      return;
    }
    next = std::move(trial);
    pr.applied = true;
  };
  for (auto& pr : rep.params)
    if (pr.value && !pr.vetoed) try_apply(pr, [&](ParamSpec& p) { p.value = pr.value->value; });
  for (auto& pr : rep.params)
    if (pr.tolerance && !pr.vetoed)
      try_apply(pr, [&](ParamSpec& p) {
        p.tol_neg = pr.tolerance->tol_neg;
        p.tol_pos = pr.tolerance->tol_pos;
      });
  for (auto& pr : rep.params) pr.after = next.param(pr.id);

  RoundResult out;
  if (rep.applied() > 0) {
    out.log = eval_dataset(next, ds);
    out.net = std::move(next);
  } else {
    out.log = std::move(log);
    out.net = std::move(net);
  }
  rep.after = out.log.counts();
  rep.error_after = rep.after.weighted_error(cfg.weights);
  out.report = std::move(rep);
  return out;
}

struct TuneResult {
  NetworkSpec start;
  NetworkSpec best;
  int best_round = 0;
  // Weighted error of the network after each round; entry 0 is the start.
  std::vector<double> errors;
  std::vector<RoundReport> rounds;
  DecisionLog best_log;
};

// Up to max_rounds rounds, stopping after the first round that applies
// nothing; returns the lowest-error network seen (earliest on ties).
inline TuneResult tune(const NetworkSpec& start, const Dataset& ds, const LearnerConfig& cfg) {
  cfg.validate();
  TuneResult out;
  out.start = with_bins(start, cfg);
  out.start.validate();
  NetworkSpec cur = out.start;
  DecisionLog log = eval_dataset(cur, ds);
  out.errors.push_back(log.counts().weighted_error(cfg.weights));
  out.best = cur;
  out.best_log = log;
  for (int r = 1; r <= cfg.max_rounds; ++r) {
    RoundResult res = tune_round(cur, ds, cfg, {}, &log, r);
    const bool applied = res.report.applied() > 0;
    out.rounds.push_back(std::move(res.report));
    if (!applied) break;
    cur = std::move(res.net);
    log = std::move(res.log);
    out.errors.push_back(out.rounds.back().error_after);
    if (out.errors.back() < out.errors[static_cast<std::size_t>(out.best_round)]) {
      out.best_round = r;
      out.best = cur;
      out.best_log = log;
    }
  }
  return out;
}

}  // namespace sdl
