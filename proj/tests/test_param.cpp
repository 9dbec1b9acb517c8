#include <gtest/gtest.h>

#include "sdl/param.hpp"

using namespace sdl;

namespace {

ParamSpec real_param(double v, double tn, double tp) {
  ParamSpec p;
  p.id = "p";
  p.value = v;
  p.tol_neg = tn;
  p.tol_pos = tp;
  return p;
}

}  // namespace

TEST(ParamSpec, ValidateRejectsBadTolerances) {
  auto p = real_param(1, 0, 1);
  EXPECT_THROW(p.validate(), ConfigError);
  p.tol_neg = 1;
  p.tol_pos = INFINITY;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ParamSpec, ValidateChecksBoundsAndIntegers) {
  auto p = real_param(5, 1, 1);
  p.lo = 6;
  EXPECT_THROW(p.validate(), ConfigError);
  p.lo = 0;
  p.kind = ParamKind::integer;
  p.value = 5.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p.value = 5;
  p.tol_pos = 0.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p.tol_pos = 2;
  EXPECT_NO_THROW(p.validate());
}

TEST(BinGrid, RealGridSpansTolerance) {
  auto g = BinGrid::for_param(real_param(10, 4, 8), 64);
  EXPECT_EQ(g.size(), 129);
  EXPECT_DOUBLE_EQ(g.value_at(-64), 6.0);
  EXPECT_DOUBLE_EQ(g.value_at(64), 18.0);
  EXPECT_DOUBLE_EQ(g.value_at(0), 10.0);
  EXPECT_EQ(g.slot(-64), 0);
}

TEST(BinGrid, IntegerGridOneBinPerWholeNumber) {
  auto p = real_param(5, 2, 3);
  p.kind = ParamKind::integer;
  auto g = BinGrid::for_param(p);
  EXPECT_EQ(g.size(), 6);
  EXPECT_EQ(g.value_at(-2), 3);
  EXPECT_EQ(g.value_at(3), 8);
  EXPECT_EQ(g.bin_of(7), 2);
  EXPECT_FALSE(g.bin_of(9));
  EXPECT_FALSE(g.bin_of(6.5));
}

TEST(BinGrid, FirstAboveAndLastAtOrBelowMatchLinearScan) {
  auto g = BinGrid::for_param(real_param(0.3, 0.7, 1.3), 64);
  for (int i = -900; i <= 1900; ++i) {
    double x = i * 0.001;
    std::optional<int> up, down;
    for (int k = 1; k <= g.max_bin(); ++k)
      if (g.value_at(k) > x) {
        up = k;
        break;
      }
    for (int k = -1; k >= g.min_bin(); --k)
      if (g.value_at(k) <= x) {
        down = k;
        break;
      }
    ASSERT_EQ(g.first_above(x), up) << x;
    ASSERT_EQ(g.last_at_or_below(x), down) << x;
  }
}

TEST(BinGrid, BinOfRoundTripsEveryBin) {
  auto g = BinGrid::for_param(real_param(-3.7, 0.9, 0.15), 64);
  for (int k = g.min_bin(); k <= g.max_bin(); ++k) EXPECT_EQ(g.bin_of(g.value_at(k)), k);
}
