#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sdl/error.hpp"
#include "sdl/param.hpp"
#include "sdl/score.hpp"
#include "sdl/scorecore.hpp"

namespace sdl {

struct AggregateOptions {
  int bins_per_side = kDefaultBinsPerSide;
  std::string_view unit = "aggregate";
};

// "At least N of the candidates are true": an AND over the N best-ranked
// candidates, with N itself as a competing suspect.
inline Score count_at_least(std::span<const Score> candidates, const ParamSpec& n_param,
                            const AggregateOptions& opt = {}) {
  if (!(n_param.value >= 1)) throw ConfigError("unit '" + std::string(opt.unit) + "': count must be >= 1");
  const auto n = static_cast<std::size_t>(n_param.value);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].s > candidates[b].s; });
  std::size_t n_true = 0;
  for (const auto& c : candidates) n_true += c.decision() ? 1 : 0;

  Score base{order.size() >= n ? candidates[order[n - 1]].s : 0.0, std::nullopt};
  const bool decision = n_true >= n;
  if (decision && n_true == n) {
    // Exactly N true: the weakest of them is pivotal.
    std::size_t arg = order[0];
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t i = order[r];
      if (candidates[i].s < candidates[arg].s || (candidates[i].s == candidates[arg].s && i < arg)) arg = i;
    }
    base.attribution = detail::defeasible(candidates[arg]);
  } else if (!decision && n_true + 1 == n && order.size() >= n) {
    // One short: the best false candidate is pivotal.
    base.attribution = detail::defeasible(candidates[order[n - 1]]);
  }

  double alt = static_cast<double>(decision ? n_true + 1 : n_true);
  return select_candidate(base, alt >= 1 ? detail::structural_candidate(n_param, alt) : std::nullopt);
}

// Percentage of samples strictly below a fixed cut, tested against an
// at-or-above threshold on the percentage.
inline Score fraction_below(std::span<const double> samples, double cut, const ParamSpec& p,
                            const AggregateOptions& opt = {}) {
  if (samples.empty()) throw EvalError("unit '" + std::string(opt.unit) + "': no samples");
  std::size_t below = 0;
  for (double x : samples) {
    detail::require_finite(x, opt.unit);
    below += x < cut ? 1 : 0;
  }
  double pct = 100.0 * static_cast<double>(below) / static_cast<double>(samples.size());
  return eval_threshold_above(pct, p, {opt.bins_per_side, opt.unit});
}

// Binary occupancy mask with a summed-area table, so any row or column
// projection over a sub-range costs O(1).
class MaskGrid {
 public:
  MaskGrid() = default;

  // `bits` is row-major, width * height entries, nonzero = set.
  MaskGrid(int width, int height, std::span<const std::uint8_t> bits) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InputError("mask dimensions must be non-negative");
    if (bits.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw InputError("mask bit count does not match dimensions");
    sat_.assign(static_cast<std::size_t>(width + 1) * static_cast<std::size_t>(height + 1), 0);
    for (int y = 0; y < height; ++y) {
      std::uint32_t row = 0;
      for (int x = 0; x < width; ++x) {
        row += bits[static_cast<std::size_t>(y) * width + x] ? 1u : 0u;
        sat_[idx(x + 1, y + 1)] = sat_[idx(x + 1, y)] + row;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return sat_.empty(); }

  bool at(int x, int y) const { return rect_sum(x, x + 1, y, y + 1) != 0; }

  // Set pixels in [x0, x1) x [y0, y1).
  std::uint32_t rect_sum(int x0, int x1, int y0, int y1) const {
    return sat_[idx(x1, y1)] - sat_[idx(x0, y1)] - sat_[idx(x1, y0)] + sat_[idx(x0, y0)];
  }
  // Column x restricted to rows [y0, y1).
  std::uint32_t column_sum(int x, int y0, int y1) const { return rect_sum(x, x + 1, y0, y1); }
  // Row y restricted to columns [x0, x1).
  std::uint32_t row_sum(int y, int x0, int x1) const { return rect_sum(x0, x1, y, y + 1); }

  std::uint32_t total() const { return empty() ? 0 : rect_sum(0, width_, 0, height_); }

  bool operator==(const MaskGrid&) const = default;

 private:
  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_ + 1) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> sat_;
};

// Half-open rectangle [x0, x1) x [y0, y1) with integer bound parameters and
// a threshold on the count of set pixels inside it.
struct RegionSpec {
  ParamSpec x0, x1, y0, y1;
  ParamSpec threshold;
};

namespace detail {

// One candidate bound shift, |d| steps away, on a side with tolerance `tol`;
// same scale as structural_candidate.
inline double bound_margin(int d, double tol) { return 0.5 * (std::abs(d) - 0.5) / tol; }

struct BoundCandidate {
  const ParamSpec* param = nullptr;
  double alternate = 0.0;
  double margin = 0.0;
};

}  // namespace detail

// Count set pixels inside the region and test the count against the
// threshold. Candidate suspects are the threshold and each of the four
// bounds; for a bound, the nearest shift (within its tolerance) that moves
// the count across the threshold is found from the mask projections.
inline Score region_count(const MaskGrid& mask, const RegionSpec& r, const AggregateOptions& opt = {}) {
  const int x0 = static_cast<int>(r.x0.value), x1 = static_cast<int>(r.x1.value);
  const int y0 = static_cast<int>(r.y0.value), y1 = static_cast<int>(r.y1.value);
  if (!(0 <= x0 && x0 < x1 && x1 <= mask.width() && 0 <= y0 && y0 < y1 && y1 <= mask.height()))
    throw ConfigError("unit '" + std::string(opt.unit) + "': region [" + std::to_string(x0) + "," +
                      std::to_string(x1) + ")x[" + std::to_string(y0) + "," + std::to_string(y1) +
                      ") outside " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                      " mask");

  const auto count = static_cast<double>(mask.rect_sum(x0, x1, y0, y1));
  const double t = r.threshold.value;
  Score base = eval_threshold_above(count, r.threshold, {opt.bins_per_side, opt.unit});
  const bool decision = base.decision();
  auto flips = [&](double c) { return (c >= t) != decision; };

  std::optional<detail::BoundCandidate> best;
  auto offer = [&](const ParamSpec& p, int pos, int d, double tol) {
    double m = detail::bound_margin(d, tol);
    if (!best || m < best->margin) best = detail::BoundCandidate{&p, static_cast<double>(pos), m};
  };

  // x0: shrinking the region moves it right, growing moves it left.
  {
    double c = count;
    if (decision) {
      for (int d = 1; d <= static_cast<int>(r.x0.tol_pos); ++d) {
        int nx = x0 + d;
        if (nx >= x1 || nx > r.x0.hi) break;
        c -= mask.column_sum(nx - 1, y0, y1);
        if (flips(c)) { offer(r.x0, nx, d, r.x0.tol_pos); break; }
      }
    } else {
      for (int d = 1; d <= static_cast<int>(r.x0.tol_neg); ++d) {
        int nx = x0 - d;
        if (nx < 0 || nx < r.x0.lo) break;
        c += mask.column_sum(nx, y0, y1);
        if (flips(c)) { offer(r.x0, nx, d, r.x0.tol_neg); break; }
      }
    }
  }
  // x1
  {
    double c = count;
    if (decision) {
      for (int d = 1; d <= static_cast<int>(r.x1.tol_neg); ++d) {
        int nx = x1 - d;
        if (nx <= x0 || nx < r.x1.lo) break;
        c -= mask.column_sum(nx, y0, y1);
        if (flips(c)) { offer(r.x1, nx, d, r.x1.tol_neg); break; }
      }
    } else {
      for (int d = 1; d <= static_cast<int>(r.x1.tol_pos); ++d) {
        int nx = x1 + d;
        if (nx > mask.width() || nx > r.x1.hi) break;
        c += mask.column_sum(nx - 1, y0, y1);
        if (flips(c)) { offer(r.x1, nx, d, r.x1.tol_pos); break; }
      }
    }
  }
  // y0
  {
    double c = count;
    if (decision) {
      for (int d = 1; d <= static_cast<int>(r.y0.tol_pos); ++d) {
        int ny = y0 + d;
        if (ny >= y1 || ny > r.y0.hi) break;
        c -= mask.row_sum(ny - 1, x0, x1);
        if (flips(c)) { offer(r.y0, ny, d, r.y0.tol_pos); break; }
      }
    } else {
      for (int d = 1; d <= static_cast<int>(r.y0.tol_neg); ++d) {
        int ny = y0 - d;
        if (ny < 0 || ny < r.y0.lo) break;
        c += mask.row_sum(ny, x0, x1);
        if (flips(c)) { offer(r.y0, ny, d, r.y0.tol_neg); break; }
      }
    }
  }
  // y1
  {
    double c = count;
    if (decision) {
      for (int d = 1; d <= static_cast<int>(r.y1.tol_neg); ++d) {
        int ny = y1 - d;
        if (ny <= y0 || ny < r.y1.lo) break;
        c -= mask.row_sum(ny, x0, x1);
        if (flips(c)) { offer(r.y1, ny, d, r.y1.tol_neg); break; }
      }
    } else {
      for (int d = 1; d <= static_cast<int>(r.y1.tol_pos); ++d) {
        int ny = y1 + d;
        if (ny > mask.height() || ny > r.y1.hi) break;
        c += mask.row_sum(ny - 1, x0, x1);
        if (flips(c)) { offer(r.y1, ny, d, r.y1.tol_pos); break; }
      }
    }
  }

  if (!best) return base;
  return select_candidate(base, Attribution{best->param->index, best->alternate, best->margin, false});
}

}  // namespace sdl
