#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "mq/common.hpp"
#include "mq/family.hpp"
#include "mq/measure.hpp"
#include "mq/process.hpp"

namespace mq {

struct Partition {
  std::vector<double> points;  // a = r_0 < ... < r_{m+1} = b

  Partition(std::initializer_list<double> pts) : points(pts) { validate(); }
  explicit Partition(std::vector<double> pts) : points(std::move(pts)) { validate(); }

  static Partition uniform(double a, double b, int cells) {
    std::vector<double> p;
    for (int i = 0; i <= cells; ++i) p.push_back(a + (b - a) * i / cells);
    return Partition(std::move(p));
  }

  double mesh() const {
    double m = 0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i)
      m = std::max(m, points[i + 1] - points[i]);
    return m;
  }

 private:
  void validate() const {
    if (points.size() < 2) throw BadSpec("partition needs at least two points");
    for (std::size_t i = 1; i < points.size(); ++i)
      if (!(points[i] > points[i - 1])) throw BadSpec("partition must strictly increase");
  }
};

// E(mu, R) = sum W2(mu_{r_k}, mu_{r_{k+1}})^2 / (r_{k+1} - r_k).
inline double energy(const MarginalFamily& family, const Partition& R) {
  double acc = 0;
  RealMeasure prev = family.measure_at(R.points.front());
  for (std::size_t i = 0; i + 1 < R.points.size(); ++i) {
    RealMeasure next = family.measure_at(R.points[i + 1]);
    double d = w2(prev, next);
    acc += d * d / (R.points[i + 1] - R.points[i]);
    prev = std::move(next);
  }
  return acc;
}

struct EnergyReport {
  bool infinite = false;
  double value = 0;
  std::vector<double> history;  // energies along the dyadic refinement
};

// Dyadic refinement of uniform partitions: the sequence is non-decreasing
// (merging inequality), so stop when two consecutive values agree within tol
// or the ceiling is exceeded (curve not absolutely continuous of order 2).
inline EnergyReport energy_limit(const MarginalFamily& family, double a, double b, double tol,
                                 double ceiling = 1e6, int max_depth = 20) {
  EnergyReport rep;
  double prev = energy(family, Partition::uniform(a, b, 1));
  rep.history.push_back(prev);
  for (int d = 1; d <= max_depth; ++d) {
    double cur = energy(family, Partition::uniform(a, b, 1 << d));
    rep.history.push_back(cur);
    if (cur < prev - 1e-9 * (1 + std::fabs(prev)))
      throw BadSpec("energy decreased under refinement");
    if (cur > ceiling) {
      rep.infinite = true;
      rep.value = cur;
      return rep;
    }
    if (std::fabs(cur - prev) < tol) {
      rep.value = cur;
      return rep;
    }
    prev = cur;
  }
  rep.value = prev;
  return rep;
}

// Grid energy of one trajectory.
inline double path_energy(const std::vector<double>& grid, const double* xs) {
  double acc = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double dx = xs[i + 1] - xs[i];
    acc += dx * dx / (grid[i + 1] - grid[i]);
  }
  return acc;
}

// Mean grid energy over the ensemble.
inline double action(const PathEnsemble& e) {
  if (e.grid.size() < 2) throw OutOfRange("action needs at least two grid points");
  double acc = 0;
  std::size_t n = e.path_count();
  for (std::size_t p = 0; p < n; ++p) acc += path_energy(e.grid, &e.values[p * e.grid.size()]);
  return acc / n;
}

// Sample standard deviation of the per-path energies (for Monte Carlo bands).
inline double action_std_error(const PathEnsemble& e) {
  std::size_t n = e.path_count();
  double mean = action(e);
  double var = 0;
  for (std::size_t p = 0; p < n; ++p) {
    double d = path_energy(e.grid, &e.values[p * e.grid.size()]) - mean;
    var += d * d;
  }
  return std::sqrt(var / (n - 1) / n);
}

// Coarsen by keeping every second grid column (same trajectories); the action
// difference against the fine grid isolates the grid bias.
inline PathEnsemble coarsen(const PathEnsemble& e) {
  if ((e.grid.size() - 1) % 2 != 0) throw BadSpec("coarsening needs an even cell count");
  PathEnsemble out;
  out.seed = e.seed;
  for (std::size_t i = 0; i < e.grid.size(); i += 2) out.grid.push_back(e.grid[i]);
  std::size_t n = e.path_count();
  out.values.reserve(n * out.grid.size());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < e.grid.size(); i += 2) out.values.push_back(e.at(p, i));
  return out;
}

// Dynamical transport made Markov at the partition points: quantile couplings
// across consecutive points, linear interpolation onto the output grid.
inline PathEnsemble disp_ensemble(FamilyPtr family, const Partition& R, std::size_t n,
                                  std::uint64_t seed,
                                  const std::vector<double>* output_grid = nullptr) {
  auto handle = ProcessHandle::made_markov_at(family, R.points);
  // between partition points the made-Markov quantile law is sampled exactly
  PathEnsemble at_points = handle.simulate(R.points, n, seed);
  if (!output_grid) return at_points;

  PathEnsemble out;
  out.seed = seed;
  out.grid = *output_grid;
  out.values.assign(n * out.grid.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
      double t = out.grid[i];
      auto it = std::upper_bound(R.points.begin(), R.points.end(), t);
      std::size_t k = static_cast<std::size_t>(it - R.points.begin());
      if (k == 0) {
        out.values[p * out.grid.size() + i] = at_points.at(p, 0);
      } else if (k >= R.points.size()) {
        out.values[p * out.grid.size() + i] = at_points.at(p, R.points.size() - 1);
      } else {
        double t0 = R.points[k - 1], t1 = R.points[k];
        double s = (t - t0) / (t1 - t0);
        out.values[p * out.grid.size() + i] =
            (1 - s) * at_points.at(p, k - 1) + s * at_points.at(p, k);
      }
    }
  return out;
}

}  // namespace mq
