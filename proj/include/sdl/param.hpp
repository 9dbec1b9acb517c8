#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "sdl/error.hpp"

namespace sdl {

inline constexpr int kDefaultBinsPerSide = 64;

enum class ParamKind { real, integer };

inline const char* to_string(ParamKind k) { return k == ParamKind::real ? "real" : "integer"; }

// Position of a parameter in its network's parameter table.
using ParamIndex = std::int32_t;

// One tunable parameter. Tolerances are one-sided widths around `value`;
// `lo`/`hi` are hard limits no update may cross.
struct ParamSpec {
  std::string id;
  double value = 0.0;
  double tol_neg = 1.0;
  double tol_pos = 1.0;
  ParamKind kind = ParamKind::real;
  double lo = -HUGE_VAL;
  double hi = HUGE_VAL;
  ParamIndex index = 0;

  bool is_integer() const { return kind == ParamKind::integer; }

  void validate() const {
    auto fail = [&](const std::string& why) { throw ConfigError("parameter '" + id + "': " + why); };
    if (!std::isfinite(value)) fail("value must be finite");
    if (!(tol_neg > 0) || !(tol_pos > 0) || !std::isfinite(tol_neg) || !std::isfinite(tol_pos))
      fail("tolerances must be positive and finite");
    if (std::isnan(lo) || std::isnan(hi) || lo > hi) fail("hard bounds must satisfy lo <= hi");
    if (value < lo || value > hi) fail("value outside hard bounds");
    if (is_integer()) {
      auto whole = [](double v) { return !std::isfinite(v) || v == std::floor(v); };
      if (!whole(value) || !whole(lo) || !whole(hi)) fail("integer parameter needs whole value and bounds");
      if (!whole(tol_neg) || !whole(tol_pos) || tol_neg < 1 || tol_pos < 1)
        fail("integer parameter needs whole tolerances >= 1");
    }
  }

  bool within_bounds(double v) const { return v >= lo && v <= hi; }
};

// Grid of candidate parameter values spanning [value - tol_neg, value + tol_pos].
// Bin k = 0 is the current value; k < 0 lies below it, k > 0 above it.
// Real parameters get `bins_per_side` bins per side; integer parameters
// one bin per whole number.
class BinGrid {
 public:
  BinGrid() = default;

  static BinGrid for_param(const ParamSpec& p, int bins_per_side = kDefaultBinsPerSide) {
    BinGrid g;
    g.origin_ = p.value;
    if (p.is_integer()) {
      g.n_neg_ = static_cast<int>(p.tol_neg);
      g.n_pos_ = static_cast<int>(p.tol_pos);
      g.step_neg_ = g.step_pos_ = 1.0;
    } else {
      if (bins_per_side < 1) throw ConfigError("bins_per_side must be >= 1");
      g.n_neg_ = g.n_pos_ = bins_per_side;
      g.step_neg_ = p.tol_neg / bins_per_side;
      g.step_pos_ = p.tol_pos / bins_per_side;
    }
    return g;
  }

  double origin() const { return origin_; }
  int n_neg() const { return n_neg_; }
  int n_pos() const { return n_pos_; }
  int size() const { return n_neg_ + n_pos_ + 1; }
  int min_bin() const { return -n_neg_; }
  int max_bin() const { return n_pos_; }
  double step_neg() const { return step_neg_; }
  double step_pos() const { return step_pos_; }
  // Storage slot of bin k.
  int slot(int k) const { return k + n_neg_; }
  // Distance of bin k from the origin in parameter units.
  double distance(int k) const { return k < 0 ? -k * step_neg_ : k * step_pos_; }

  double value_at(int k) const {
    if (k > 0) return origin_ + k * step_pos_;
    if (k < 0) return origin_ + k * step_neg_;
    return origin_;
  }

  // Bin whose grid value is exactly `v`, if any.
  std::optional<int> bin_of(double v) const {
    double step = v >= origin_ ? step_pos_ : step_neg_;
    double k = std::round((v - origin_) / step);
    if (k < min_bin() || k > max_bin()) return std::nullopt;
    int ki = static_cast<int>(k);
    if (value_at(ki) != v) return std::nullopt;
    return ki;
  }

  // Smallest bin k >= 1 with value_at(k) > x.
  std::optional<int> first_above(double x) const {
    if (n_pos_ < 1 || !(value_at(n_pos_) > x)) return std::nullopt;
    double guess = std::floor((x - origin_) / step_pos_) + 1.0;
    int k = static_cast<int>(std::clamp(guess, 1.0, static_cast<double>(n_pos_)));
    while (k < n_pos_ && !(value_at(k) > x)) ++k;
    while (k > 1 && value_at(k - 1) > x) --k;
    return k;
  }

  // Largest bin k <= -1 with value_at(k) <= x.
  std::optional<int> last_at_or_below(double x) const {
    if (n_neg_ < 1 || !(value_at(-n_neg_) <= x)) return std::nullopt;
    double guess = std::floor((x - origin_) / step_neg_);
    int k = static_cast<int>(std::clamp(guess, static_cast<double>(-n_neg_), -1.0));
    while (k > -n_neg_ && !(value_at(k) <= x)) --k;
    while (k < -1 && value_at(k + 1) <= x) ++k;
    return k;
  }

 private:
  double origin_ = 0.0;
  double step_neg_ = 1.0;
  double step_pos_ = 1.0;
  int n_neg_ = 0;
  int n_pos_ = 0;
};

// Snap a value to what the parameter kind can hold.
inline double snap_to_kind(const ParamSpec& p, double v) { return p.is_integer() ? std::round(v) : v; }

}  // namespace sdl
