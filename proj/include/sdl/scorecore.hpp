#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "sdl/error.hpp"
#include "sdl/param.hpp"
#include "sdl/score.hpp"

namespace sdl {

struct ThresholdOptions {
  int bins_per_side = kDefaultBinsPerSide;
  // Name used in error messages.
  std::string_view unit = "threshold";
};

namespace detail {

inline void require_finite(double x, std::string_view unit) {
  if (!std::isfinite(x)) throw EvalError("unit '" + std::string(unit) + "': non-finite input");
}

inline std::optional<Attribution> attribution_at(const ParamSpec& p, const BinGrid& grid, std::optional<int> bin,
                                                 double s) {
  if (!bin) return std::nullopt;
  double alt = grid.value_at(*bin);
  if (!p.within_bounds(alt)) return std::nullopt;
  return Attribution{p.index, alt, std::abs(s - 0.5), false};
}

}  // namespace detail

// True when x >= value. The score ramps linearly from 0 at value - tol_neg to
// 1 at value + tol_pos; inside the ramp the attribution names the nearest
// grid value of `p` that flips the decision.
inline Score eval_threshold_above(double x, const ParamSpec& p, const ThresholdOptions& opt = {}) {
  detail::require_finite(x, opt.unit);
  const bool decision = x >= p.value;
  const double tol = decision ? p.tol_pos : p.tol_neg;
  double s = std::clamp(0.5 + 0.5 * (x - p.value) / tol, 0.0, 1.0);
  if (!decision && s >= 0.5) s = just_false();
  Score out{s, std::nullopt};
  if (s > 0.0 && s < 1.0) {
    BinGrid grid = BinGrid::for_param(p, opt.bins_per_side);
    out.attribution =
        detail::attribution_at(p, grid, decision ? grid.first_above(x) : grid.last_at_or_below(x), s);
  }
  return out;
}

// True when x < value. At x == value the score sits one step under 0.5.
inline Score eval_threshold_below(double x, const ParamSpec& p, const ThresholdOptions& opt = {}) {
  detail::require_finite(x, opt.unit);
  const bool decision = x < p.value;
  const double tol = decision ? p.tol_neg : p.tol_pos;
  double s = std::clamp(0.5 + 0.5 * (p.value - x) / tol, 0.0, 1.0);
  if (!decision && s >= 0.5) s = just_false();
  Score out{s, std::nullopt};
  if (s > 0.0 && s < 1.0) {
    BinGrid grid = BinGrid::for_param(p, opt.bins_per_side);
    out.attribution =
        detail::attribution_at(p, grid, decision ? grid.last_at_or_below(x) : grid.first_above(x), s);
  }
  return out;
}

namespace detail {

// Candidate for a structural integer parameter (window length, count, region
// bound) that flips the decision when moved to `alternate`. Its margin is the
// ramp evaluated halfway through the first step of the move.
inline std::optional<Attribution> structural_candidate(const ParamSpec& p, double alternate) {
  double d = alternate - p.value;
  double tol = d > 0 ? p.tol_pos : p.tol_neg;
  if (d == 0 || std::abs(d) > tol || !p.within_bounds(alternate)) return std::nullopt;
  return Attribution{p.index, alternate, 0.5 * (std::abs(d) - 0.5) / tol, false};
}

inline std::optional<Attribution> defeasible(const Score& in) {
  if (in.saturated()) return std::nullopt;
  return in.attribution;
}

}  // namespace detail

// Fuzzy AND (minimum). When true, blame the weakest input; when false,
// blame the single false input if there is exactly one.
inline Score gate_and(std::span<const Score> inputs) {
  if (inputs.empty()) throw ConfigError("and gate needs at least one input");
  std::size_t arg = 0;
  std::size_t n_false = 0;
  std::size_t last_false = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].s < inputs[arg].s) arg = i;
    if (!inputs[i].decision()) {
      ++n_false;
      last_false = i;
    }
  }
  Score out{inputs[arg].s, std::nullopt};
  if (out.decision())
    out.attribution = detail::defeasible(inputs[arg]);
  else if (n_false == 1)
    out.attribution = detail::defeasible(inputs[last_false]);
  return out;
}

// Fuzzy OR (maximum). When false, blame the strongest input; when true,
// blame the single true input if there is exactly one.
inline Score gate_or(std::span<const Score> inputs) {
  if (inputs.empty()) throw ConfigError("or gate needs at least one input");
  std::size_t arg = 0;
  std::size_t n_true = 0;
  std::size_t last_true = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].s > inputs[arg].s) arg = i;
    if (inputs[i].decision()) {
      ++n_true;
      last_true = i;
    }
  }
  Score out{inputs[arg].s, std::nullopt};
  if (!out.decision())
    out.attribution = detail::defeasible(inputs[arg]);
  else if (n_true == 1)
    out.attribution = detail::defeasible(inputs[last_true]);
  return out;
}

// Combine a unit's own score/blame with a competing candidate that blames
// one of the unit's meta parameters (time constant, count, region bound).
// The smaller margin wins; ties keep the input-chain blame. When the meta
// candidate wins, the reported score is whichever of the two is closer to
// the decision boundary, so an attributed output is never saturated.
inline Score select_candidate(Score base, const std::optional<Attribution>& meta) {
  if (!meta) return base;
  if (base.attribution && base.attribution->margin <= meta->margin) return base;
  Score out{base.s, meta};
  if (meta->margin < base.margin()) out.s = score_from_margin(base.decision(), meta->margin);
  return out;
}

}  // namespace sdl
