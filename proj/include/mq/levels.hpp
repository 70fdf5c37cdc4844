#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "mq/common.hpp"
#include "mq/family.hpp"
#include "mq/kernel.hpp"

namespace mq {

inline LevelKernel ell_of(const AtomicLevelSet& A) { return LevelKernel::averaging(A); }

// Exact composition of ell_r over a finite time set, increasing order.
inline LevelCoupling L_finite(const MarginalFamily& family, std::vector<double> times) {
  std::sort(times.begin(), times.end());
  LevelKernel k = LevelKernel::identity();
  for (double r : times) {
    auto A = family.atomic_levels_at(r);
    if (A.empty()) continue;
    k = compose(k, ell_of(A));
  }
  return LevelCoupling{std::move(k)};
}

struct IntervalResult {
  LevelCoupling coupling;
  bool exact = false;        // explicit family: declared times, no refinement
  int depth = 0;             // refinement depth reached
  double last_gap = 0.0;     // rho between the last two refinements
  bool monotone = true;      // lo-monotonicity certificate along refinements
  std::vector<double> gaps;  // recorded gap per doubling
};

struct RefineOptions {
  double tol = kRefineTol;
  int max_depth = 20;
  std::optional<int> forced_depth;  // evaluate one fixed depth, no stopping rule
};

// L over the open interval ]s,t[. Explicit families compose their declared
// atomic times exactly. Parametric families are refined on anchored dyadic
// grids; the sequence is lo-increasing, and the stopping rule (two successive
// gaps below tol) is a documented heuristic since no rate is available.
inline IntervalResult L_interval(const MarginalFamily& family, double s, double t,
                                 const RefineOptions& opt = {}) {
  if (!(s < t)) throw OutOfRange("interval needs s < t");
  IntervalResult res;
  if (auto declared = family.atomic_times_in(s, t, /*open=*/true)) {
    res.coupling = L_finite(family, *declared);
    res.exact = true;
    return res;
  }

  auto level_at = [&](int depth) {
    std::vector<double> times = family.anchors_in(s, t);
    int n = 1 << depth;
    for (int k = 1; k < n; ++k) times.push_back(s + (t - s) * k / n);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return L_finite(family, times);
  };

  if (opt.forced_depth) {
    res.coupling = level_at(*opt.forced_depth);
    res.depth = *opt.forced_depth;
    return res;
  }

  LevelCoupling prev = level_at(0);
  int consecutive = 0;
  for (int depth = 1; depth <= opt.max_depth; ++depth) {
    LevelCoupling cur = level_at(depth);
    double gap = rho(prev, cur);
    res.gaps.push_back(gap);
    res.monotone = res.monotone && lo_leq(prev, cur);
    res.last_gap = gap;
    res.depth = depth;
    prev = std::move(cur);
    consecutive = gap < opt.tol ? consecutive + 1 : 0;
    if (consecutive >= 2) {
      res.coupling = std::move(prev);
      return res;
    }
  }
  throw NoConvergence("interval refinement did not stabilize", res.last_gap);
}

// L over a closed interval [s,t]: boundary averagings applied on both sides.
inline LevelCoupling L_closed_interval(const MarginalFamily& family, double s, double t,
                                       const RefineOptions& opt = {}) {
  if (near(s, t, kGridTol)) return LevelCoupling{ell_of(family.atomic_levels_at(s))};
  LevelKernel k = ell_of(family.atomic_levels_at(s));
  k = compose(k, L_interval(family, s, t, opt).coupling.kernel);
  k = compose(k, ell_of(family.atomic_levels_at(t)));
  return LevelCoupling{std::move(k)};
}

enum class Essentiality { No, Yes, Indeterminate };

// I is essential iff removing it from a surrounding window changes L. The
// window splits as ]s,t[ \ [a,b] = ]s,a[ u ]b,t[, composed by the split rule.
inline Essentiality essential(const MarginalFamily& family, double a, double b, double s,
                              double t, const RefineOptions& opt = {}) {
  if (!(s < a) || !(b < t) || a > b) throw OutOfRange("probe must strictly contain the interval");
  LevelCoupling full = L_interval(family, s, t, opt).coupling;
  LevelKernel without = LevelKernel::identity();
  if (a - s > kGridTol) without = compose(without, L_interval(family, s, a, opt).coupling.kernel);
  if (t - b > kGridTol) without = compose(without, L_interval(family, b, t, opt).coupling.kernel);
  double gap = rho(full, LevelCoupling{std::move(without)});
  if (gap > 10 * opt.tol) return Essentiality::Yes;
  if (gap < 0.1 * opt.tol) return Essentiality::No;
  return Essentiality::Indeterminate;
}

inline Essentiality essential_time(const MarginalFamily& family, double r, double s, double t,
                                   const RefineOptions& opt = {}) {
  return essential(family, r, r, s, t, opt);
}

}  // namespace mq
