#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mq/kernel.hpp"
#include "mq/measure.hpp"
#include "mq/rng.hpp"

namespace mqtest {

using namespace mq;

// Random measure with dyadic level breakpoints (denominator <= 64) and
// quarter-integer values; on-grid for the N = 1024 bin oracle.
inline RealMeasure random_dyadic_measure(CounterRng& rng, int max_pieces = 4) {
  int n = 1 + static_cast<int>(rng.next_u64() % static_cast<unsigned>(max_pieces));
  std::vector<int> cuts{0, 64};
  for (int i = 1; i < n; ++i) cuts.push_back(1 + static_cast<int>(rng.next_u64() % 63));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<std::pair<double, Piece>> pieces;
  double x = std::floor(rng.next_double() * 8) / 4.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double w = (cuts[i + 1] - cuts[i]) / 64.0;
    if (rng.next_double() < 0.5) {
      pieces.push_back({w, Atom{x}});
    } else {
      double hi = x + std::floor(1 + rng.next_double() * 8) / 4.0;
      pieces.push_back({w, Segment{x, hi}});
      x = hi;
    }
    x += std::floor(rng.next_double() * 4) / 4.0;
  }
  return make_measure(pieces);
}

// Disjoint dyadic level intervals (denominator 64).
inline AtomicLevelSet random_atomic_set(CounterRng& rng, int max_intervals = 3) {
  int m = 1 + static_cast<int>(rng.next_u64() % static_cast<unsigned>(max_intervals));
  std::vector<int> cuts;
  for (int i = 0; i < 2 * m; ++i) cuts.push_back(static_cast<int>(rng.next_u64() % 65));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  AtomicLevelSet A;
  for (std::size_t i = 0; i + 1 < cuts.size(); i += 2)
    A.intervals.push_back({cuts[i] / 64.0, cuts[i + 1] / 64.0});
  return A;
}

// Random doubly-stochastic kernel with increasing kernel: compositions and
// mixtures of averaging kernels, the identity and full averaging.
inline LevelKernel random_increasing_kernel(CounterRng& rng, int depth = 2) {
  LevelKernel k = LevelKernel::averaging(random_atomic_set(rng));
  for (int d = 0; d < depth; ++d) {
    double roll = rng.next_double();
    if (roll < 0.4)
      k = compose(k, LevelKernel::averaging(random_atomic_set(rng)));
    else if (roll < 0.6)
      k = mix(k, LevelKernel::identity(), 0.25 + 0.5 * rng.next_double());
    else if (roll < 0.8)
      k = mix(k, LevelKernel::full_average(), 0.25 + 0.5 * rng.next_double());
  }
  return k;
}

// Doubly stochastic but *not* increasing: swaps the equal-length blocks
// (a, a+d) and (b, b+d), identity elsewhere.
inline LevelKernel swap_kernel(double a = 0.0, double b = 0.5, double d = 0.5) {
  auto lo = LevelDensity::uniform_prob(a, a + d);
  auto hi = LevelDensity::uniform_prob(b, b + d);
  std::vector<double> grid{0.0, a, a + d, b, b + d, 1.0};
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::size_t cells = grid.size() - 1;
  std::vector<double> ident(cells, 1.0);
  std::vector<std::vector<double>> coef(2, std::vector<double>(cells, 0.0));
  for (std::size_t i = 0; i < cells; ++i) {
    double mid = 0.5 * (grid[i] + grid[i + 1]);
    if (mid > a && mid < a + d) {
      ident[i] = 0.0;
      coef[1][i] = 1.0;
    } else if (mid > b && mid < b + d) {
      ident[i] = 0.0;
      coef[0][i] = 1.0;
    }
  }
  return LevelKernel::from_parts(std::move(grid), std::move(ident), std::move(coef), {lo, hi});
}

// Random decreasing step density of mass 1 on a dyadic grid.
inline LevelDensity random_decreasing_density(CounterRng& rng, int cells = 4) {
  std::vector<int> cuts{0, 64};
  for (int i = 1; i < cells; ++i) cuts.push_back(1 + static_cast<int>(rng.next_u64() % 63));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> b, d;
  for (int c : cuts) b.push_back(c / 64.0);
  std::vector<double> raw(b.size() - 1);
  double level = 1.0 + rng.next_double();
  for (auto& r : raw) {
    r = level;
    level *= 0.2 + 0.75 * rng.next_double();
  }
  double mass = 0;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) mass += raw[i] * (b[i + 1] - b[i]);
  for (auto& r : raw) r /= mass;
  return LevelDensity(b, raw);
}

}  // namespace mqtest
