#pragma once

#include <cmath>
#include <optional>

#include "sdl/param.hpp"

namespace sdl {

// Single-parameter credit assignment: moving `param` to `alternate` flips
// the decision that carries this record.
struct Attribution {
  ParamIndex param = -1;
  double alternate = 0.0;
  // |s - 0.5| of the blamed unit; smaller is more defeasible.
  double margin = 0.0;
  // Blame chosen by round-robin among several true inputs of a monostable.
  // Such blame is not pivotal: substituting the alternate alone need not
  // flip the decision.
  bool rotated = false;

  bool operator==(const Attribution&) const = default;
};

struct Score {
  double s = 0.0;
  std::optional<Attribution> attribution;

  bool decision() const { return s >= 0.5; }
  bool saturated() const { return s <= 0.0 || s >= 1.0; }
  double margin() const { return std::abs(s - 0.5); }

  bool operator==(const Score&) const = default;
};

// Largest double strictly below the decision boundary.
inline double just_false() { return std::nextafter(0.5, 0.0); }

// Graded score on the correct side of 0.5 for `decision`, `margin` away.
inline double score_from_margin(bool decision, double margin) {
  if (decision) return 0.5 + margin;
  double s = 0.5 - margin;
  return s < 0.5 ? s : just_false();
}

}  // namespace sdl
