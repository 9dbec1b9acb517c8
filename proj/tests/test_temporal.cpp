#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "sdl/temporal.hpp"

using namespace sdl;

namespace {

TimeConstParam time_const(int v, int tol, ParamIndex idx = 9, int scan = 4) {
  ParamSpec p;
  p.id = "tc";
  p.value = v;
  p.tol_neg = tol;
  p.tol_pos = tol;
  p.kind = ParamKind::integer;
  p.lo = 1;
  p.index = idx;
  return {p, scan};
}

const Score kTrue{1.0, std::nullopt};
const Score kFalse{0.0, std::nullopt};

// Feed `lagged` oldest-first so that element i ends up at lag size-1-i.
Score run_stream(const std::vector<Score>& oldest_first, const TimeConstParam& tc, bool smooth,
                 WindowState* keep = nullptr) {
  WindowState st;
  Score out;
  for (const auto& s : oldest_first) out = smooth ? smooth_and(st, s, tc) : monostable(st, s, tc);
  if (keep) *keep = st;
  return out;
}

// Build a stream from lag-indexed decisions (lag 0 first).
std::vector<Score> from_lags(const std::vector<bool>& by_lag) {
  std::vector<Score> out;
  for (auto it = by_lag.rbegin(); it != by_lag.rend(); ++it) out.push_back(*it ? kTrue : kFalse);
  return out;
}

}  // namespace

TEST(SmoothAnd, FirstFalseAtLagFourGivesFalseAndAlternateFour) {
  auto tc = time_const(5, 3);
  Score s = run_stream(from_lags({true, true, true, true, false, true, true, true, true, true}), tc, true);
  EXPECT_FALSE(s.decision());
  ASSERT_TRUE(s.attribution);
  EXPECT_EQ(s.attribution->param, 9);
  EXPECT_EQ(s.attribution->alternate, 4);
}

TEST(SmoothAnd, FirstFalseAtLagSixGivesTrueAndAlternateSeven) {
  auto tc = time_const(5, 3);
  Score s = run_stream(from_lags({true, true, true, true, true, true, false, true, true, true}), tc, true);
  EXPECT_TRUE(s.decision());
  ASSERT_TRUE(s.attribution);
  EXPECT_EQ(s.attribution->alternate, 7);
}

TEST(SmoothAnd, LongRunHasNoTimeConstantAlternate) {
  auto tc = time_const(5, 3);
  Score s = run_stream(std::vector<Score>(20, kTrue), tc, true);
  EXPECT_TRUE(s.decision());
  EXPECT_FALSE(s.attribution);
}

TEST(SmoothAnd, WarmUpIsFalse) {
  auto tc = time_const(5, 2);
  WindowState st;
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(smooth_and(st, kTrue, tc).decision());
  EXPECT_TRUE(smooth_and(st, kTrue, tc).decision());
}

TEST(Monostable, SingleTriggerHoldsAndExpiresAtLag) {
  auto tc = time_const(10, 8);
  std::vector<bool> lags(12, false);
  lags[3] = true;
  Score s = run_stream(from_lags(lags), tc, false);
  EXPECT_TRUE(s.decision());
  ASSERT_TRUE(s.attribution);
  EXPECT_EQ(s.attribution->alternate, 3);
}

TEST(Monostable, NearestTriggerBeyondHoldGivesAlternate) {
  auto tc = time_const(10, 4, 9, 4);
  std::vector<bool> lags(20, false);
  lags[12] = true;
  Score s = run_stream(from_lags(lags), tc, false);
  EXPECT_FALSE(s.decision());
  ASSERT_TRUE(s.attribution);
  EXPECT_EQ(s.attribution->alternate, 13);
}

TEST(Monostable, BlameRotatesAmongTrueInputs) {
  auto tc = time_const(10, 2);
  WindowState st;
  auto trig = [](ParamIndex i) { return Score{0.75, Attribution{i, 0, 0.25}}; };
  std::vector<Score> seq{trig(1), kFalse, kFalse, trig(2)};
  Score s;
  for (const auto& x : seq) s = monostable(st, x, tc);
  ASSERT_TRUE(s.attribution);
  ParamIndex first = s.attribution->param;
  EXPECT_TRUE(s.attribution->rotated);
  s = monostable(st, kFalse, tc);
  ASSERT_TRUE(s.attribution);
  EXPECT_NE(s.attribution->param, first);
  s = monostable(st, kFalse, tc);
  EXPECT_EQ(s.attribution->param, first);
}

TEST(Monostable, NoRotationLeavesMultiTrueUnattributed) {
  auto tc = time_const(10, 2);
  WindowState st;
  TemporalOptions opt;
  opt.rotate_blame = false;
  Score trig{0.75, Attribution{1, 0, 0.25}};
  monostable(st, trig, tc, opt);
  Score s = monostable(st, trig, tc, opt);
  EXPECT_TRUE(s.decision());
  EXPECT_FALSE(s.attribution);
}

TEST(Monostable, FalseBeforeAnyTrigger) {
  auto tc = time_const(3, 1);
  WindowState st;
  for (int i = 0; i < 10; ++i) EXPECT_FALSE(monostable(st, kFalse, tc).decision());
}

TEST(WindowState, ReserveKeepsHistory) {
  WindowState w(3);
  for (int i = 0; i < 5; ++i) w.push(Score{i / 10.0, std::nullopt});
  w.reserve(8);
  EXPECT_EQ(w.at(0).s, 0.4);
  EXPECT_EQ(w.at(2).s, 0.2);
  EXPECT_EQ(w.at(3).s, 0.0);
  w.push(Score{0.9, std::nullopt});
  EXPECT_EQ(w.at(0).s, 0.9);
  EXPECT_EQ(w.at(3).s, 0.2);
}

// Streams of threshold scores driven by a shared parameter, checked against
// brute-force windows and against re-simulation with substituted values.
class TemporalStreams : public ::testing::TestWithParam<bool> {};

TEST_P(TemporalStreams, WindowOracleAndFlip) {
  const bool smooth = GetParam();
  std::mt19937_64 rng(smooth ? 101 : 202);
  std::uniform_real_distribution<double> u(0, 1);
  ParamSpec thr;
  thr.id = "thr";
  thr.value = 0.5;
  thr.tol_neg = thr.tol_pos = 0.2;
  thr.index = 0;
  int flips = 0;
  for (int stream = 0; stream < 60; ++stream) {
    auto tc = time_const(2 + stream % 5, 2, 1, 3);
    std::vector<double> xs(120);
    double level = u(rng);
    for (auto& x : xs) {
      if (u(rng) < 0.15) level = u(rng);
      x = std::clamp(level + (u(rng) - 0.5) * 0.3, 0.0, 1.0);
    }
    auto simulate = [&](const ParamSpec& t, const TimeConstParam& c) {
      WindowState st;
      TemporalOptions opt;
      opt.rotate_blame = false;
      std::vector<Score> out;
      for (double x : xs) {
        Score in = eval_threshold_above(x, t);
        out.push_back(smooth ? smooth_and(st, in, c, opt) : monostable(st, in, c, opt));
      }
      return out;
    };
    auto base = simulate(thr, tc);
    std::vector<Score> ins;
    for (double x : xs) ins.push_back(eval_threshold_above(x, thr));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      int len = tc.length();
      double w = smooth ? 1.0 : 0.0;
      bool any = false, all = true;
      for (int lag = 0; lag < len; ++lag) {
        Score in = lag <= static_cast<int>(i) ? ins[i - lag] : kFalse;
        w = smooth ? std::min(w, in.s) : std::max(w, in.s);
        any = any || in.decision();
        all = all && in.decision();
      }
      ASSERT_EQ(base[i].decision(), smooth ? all : any);
      if (!base[i].attribution || base[i].attribution->param != 1) {
        ASSERT_EQ(base[i].s, w);
      }
      if (!base[i].attribution) continue;
      const auto& a = *base[i].attribution;
      ParamSpec t2 = thr;
      TimeConstParam c2 = tc;
      (a.param == 0 ? t2 : c2.param).value = a.alternate;
      auto again = simulate(t2, c2);
      ASSERT_NE(again[i].decision(), base[i].decision()) << "stream " << stream << " frame " << i;
      ++flips;
    }
  }
  EXPECT_GT(flips, 100);
}

INSTANTIATE_TEST_SUITE_P(SmoothAndMono, TemporalStreams, ::testing::Values(true, false));
