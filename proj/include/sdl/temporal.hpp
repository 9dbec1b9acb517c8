#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "sdl/error.hpp"
#include "sdl/param.hpp"
#include "sdl/score.hpp"
#include "sdl/scorecore.hpp"

namespace sdl {

// An integer time constant plus how far past it the alternate scan looks.
struct TimeConstParam {
  ParamSpec param;
  int scan_margin = 4;

  // max(4, tol_pos)
  static int default_scan_margin(const ParamSpec& p) { return std::max(4, static_cast<int>(p.tol_pos)); }

  static TimeConstParam with_default_scan(ParamSpec p) {
    int m = default_scan_margin(p);
    return {std::move(p), m};
  }

  int length() const { return static_cast<int>(param.value); }

  void validate() const {
    param.validate();
    if (!param.is_integer()) throw ConfigError("time constant '" + param.id + "' must be integer");
    if (param.value < 1 || param.lo < 1) throw ConfigError("time constant '" + param.id + "' must be >= 1");
    if (scan_margin < 1) throw ConfigError("time constant '" + param.id + "': scan_margin must be >= 1");
  }
};

// History of one temporal unit's input. Lag 0 is the most recent sample;
// lags never pushed read back as saturated false.
class WindowState {
 public:
  explicit WindowState(std::size_t capacity = 1) : buf_(std::max<std::size_t>(capacity, 1)) {}

  std::size_t capacity() const { return buf_.size(); }
  std::uint64_t samples() const { return pushed_; }
  std::uint64_t rotation() const { return rotation_; }
  void set_rotation(std::uint64_t r) { rotation_ = r; }
  // Window score (min or max) behind the last output, before any blame
  // on the time constant replaced it.
  double last_window_score() const { return window_score_; }
  void set_window_score(double s) { window_score_ = s; }

  void reserve(std::size_t capacity) {
    if (capacity <= buf_.size()) return;
    std::vector<Score> grown(capacity);
    std::size_t keep = static_cast<std::size_t>(std::min<std::uint64_t>(pushed_, buf_.size()));
    for (std::size_t lag = 0; lag < keep; ++lag) grown[keep - 1 - lag] = at(lag);
    head_ = keep % capacity;
    buf_ = std::move(grown);
  }

  void push(const Score& s) {
    buf_[head_] = s;
    head_ = (head_ + 1) % buf_.size();
    ++pushed_;
  }

  Score at(std::size_t lag) const {
    if (lag >= buf_.size() || lag >= pushed_) return Score{0.0, std::nullopt};
    std::size_t pos = (head_ + buf_.size() - 1 - lag) % buf_.size();
    return buf_[pos];
  }

  void reset() {
    std::fill(buf_.begin(), buf_.end(), Score{});
    head_ = 0;
    pushed_ = 0;
    rotation_ = 0;
    window_score_ = 0.0;
  }

 private:
  std::vector<Score> buf_;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t rotation_ = 0;
  double window_score_ = 0.0;
};

struct TemporalOptions {
  // Monostable only: spread blame over several true inputs round-robin.
  bool rotate_blame = true;
};

// Sliding-window AND: true iff the last V inputs were all true. Blame goes
// either down the input chain (gate_and rules over the window) or to V
// itself: the trailing true run r gives V' = r (false) or r + 1 (true).
inline Score smooth_and(WindowState& state, const Score& input, const TimeConstParam& tc,
                        const TemporalOptions& = {}) {
  const int v = tc.length();
  const int scan = v + tc.scan_margin;
  state.reserve(static_cast<std::size_t>(scan) + 1);
  state.push(input);

  double window = 1.0;
  int arg = 0;
  int n_false = 0;
  int false_lag = -1;
  for (int lag = 0; lag < v; ++lag) {
    Score in = state.at(lag);
    if (in.s < window) {
      window = in.s;
      arg = lag;
    }
    if (!in.decision()) {
      ++n_false;
      false_lag = lag;
    }
  }
  state.set_window_score(window);

  int run = 0;
  while (run < scan && state.at(run).decision()) ++run;
  const bool decision = run >= v;

  Score base{window, std::nullopt};
  if (decision)
    base.attribution = detail::defeasible(state.at(arg));
  else if (n_false == 1)
    base.attribution = detail::defeasible(state.at(false_lag));

  std::optional<Attribution> meta;
  if (!decision)
    meta = detail::structural_candidate(tc.param, run);
  else if (run < scan)
    meta = detail::structural_candidate(tc.param, run + 1);
  return select_candidate(base, meta);
}

// Retriggerable monostable: true iff any of the last M inputs was true.
// Blame goes down the input chain (gate_or rules, with optional
// round-robin when several inputs are true) or to M: the latest trigger at
// lag k gives M' = k (true) or k + 1 (false).
inline Score monostable(WindowState& state, const Score& input, const TimeConstParam& tc,
                        const TemporalOptions& opt = {}) {
  const int m = tc.length();
  const int scan = m + tc.scan_margin;
  state.reserve(static_cast<std::size_t>(scan) + 1);
  state.push(input);

  double window = 0.0;
  int arg = 0;
  int n_true = 0;
  int first_true = -1;
  for (int lag = 0; lag < m; ++lag) {
    Score in = state.at(lag);
    if (lag == 0 || in.s > window) {
      window = in.s;
      arg = lag;
    }
    if (in.decision()) {
      if (n_true == 0) first_true = lag;
      ++n_true;
    }
  }
  state.set_window_score(window);

  int trigger = -1;
  for (int lag = 0; lag < scan; ++lag) {
    if (state.at(lag).decision()) {
      trigger = lag;
      break;
    }
  }
  const bool decision = trigger >= 0 && trigger < m;

  Score base{window, std::nullopt};
  if (!decision) {
    base.attribution = detail::defeasible(state.at(arg));
  } else if (n_true == 1) {
    base.attribution = detail::defeasible(state.at(first_true));
  } else if (opt.rotate_blame) {
    std::uint64_t r = state.rotation();
    state.set_rotation(r + 1);
    auto pick = static_cast<int>(r % static_cast<std::uint64_t>(n_true));
    for (int lag = 0; lag < m; ++lag) {
      Score in = state.at(lag);
      if (!in.decision()) continue;
      if (pick-- == 0) {
        base.attribution = detail::defeasible(in);
        break;
      }
    }
    if (base.attribution) base.attribution->rotated = true;
  }

  if (trigger < 0) return base;
  return select_candidate(base, detail::structural_candidate(tc.param, decision ? trigger : trigger + 1));
}

}  // namespace sdl
