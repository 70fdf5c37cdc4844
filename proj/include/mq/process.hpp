#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mq/common.hpp"
#include "mq/family.hpp"
#include "mq/kernel.hpp"
#include "mq/levels.hpp"
#include "mq/real_coupling.hpp"
#include "mq/rng.hpp"

namespace mq {

enum class ProcessKind { Quantile, MadeMarkovAt, MarkovQuantile };

struct PathEnsemble {
  std::vector<double> grid;
  std::vector<double> values;  // row-major, paths x grid
  std::uint64_t seed = 0;

  std::size_t path_count() const { return grid.empty() ? 0 : values.size() / grid.size(); }
  double at(std::size_t p, std::size_t i) const { return values[p * grid.size() + i]; }

  double empirical_cdf(std::size_t i, double x) const {
    std::size_t n = path_count(), c = 0;
    for (std::size_t p = 0; p < n; ++p)
      if (at(p, i) <= x) ++c;
    return double(c) / n;
  }
  double empirical_pair_cdf(std::size_t i, std::size_t j, double x, double y) const {
    std::size_t n = path_count(), c = 0;
    for (std::size_t p = 0; p < n; ++p)
      if (at(p, i) <= x && at(p, j) <= y) ++c;
    return double(c) / n;
  }
  double mean_at(std::size_t i) const {
    double s = 0;
    std::size_t n = path_count();
    for (std::size_t p = 0; p < n; ++p) s += at(p, i);
    return s / n;
  }
};

struct JumpRates {
  double up_analytic = 0, down_analytic = 0;
  double up_empirical = 0, down_empirical = 0;
};

inline unsigned worker_threads() {
  if (const char* env = std::getenv("MQ_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// A family together with the process variant and refinement tolerance; the
// Markov-quantile pair couplings are memoized per (s, t).
class ProcessHandle {
 public:
  ProcessHandle(FamilyPtr family, ProcessKind kind, std::vector<double> markov_at = {},
                RefineOptions opt = {})
      : family_(std::move(family)), kind_(kind), markov_at_(std::move(markov_at)), opt_(opt) {
    std::sort(markov_at_.begin(), markov_at_.end());
  }

  static ProcessHandle quantile(FamilyPtr f, RefineOptions opt = {}) {
    return ProcessHandle(std::move(f), ProcessKind::Quantile, {}, opt);
  }
  static ProcessHandle markov_quantile(FamilyPtr f, RefineOptions opt = {}) {
    return ProcessHandle(std::move(f), ProcessKind::MarkovQuantile, {}, opt);
  }
  static ProcessHandle made_markov_at(FamilyPtr f, std::vector<double> R,
                                      RefineOptions opt = {}) {
    return ProcessHandle(std::move(f), ProcessKind::MadeMarkovAt, std::move(R), opt);
  }

  const MarginalFamily& family() const { return *family_; }
  ProcessKind kind() const { return kind_; }
  const RefineOptions& options() const { return opt_; }

  // MQ^{s,t} = (G_s x G_t)# L_{]s,t[}.
  RealCoupling mq_coupling(double s, double t) const {
    if (!(s < t)) throw OutOfRange("mq_coupling needs s < t");
    return pushforward_coupling(family_->measure_at(s), family_->measure_at(t),
                                LevelCoupling{open_interval_kernel(s, t)});
  }

  // Level transition over the closed step [s,t] for this process variant.
  LevelKernel step_kernel(double s, double t) const {
    switch (kind_) {
      case ProcessKind::Quantile:
        return LevelKernel::identity();
      case ProcessKind::MadeMarkovAt: {
        LevelKernel k = LevelKernel::identity();
        for (double r : markov_at_)
          if (r >= s - kGridTol && r <= t + kGridTol)
            k = compose(k, ell_of(family_->atomic_levels_at(r)));
        return k;
      }
      case ProcessKind::MarkovQuantile: {
        LevelKernel k = ell_of(family_->atomic_levels_at(s));
        k = compose(k, open_interval_kernel(s, t));
        return compose(k, ell_of(family_->atomic_levels_at(t)));
      }
    }
    throw BadSpec("unknown process kind");
  }

  // Lower-orthant mass of the process law at (times, xs).
  double fd_cdf(const std::vector<double>& times, const std::vector<double>& xs) const {
    if (times.size() != xs.size()) throw LengthMismatch("times and thresholds differ");
    if (times.empty()) throw LengthMismatch("need at least one time");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw OutOfRange("times must increase");
    LevelDensity theta = LevelDensity::lebesgue().restricted_below(
        family_->measure_at(times[0]).cdf(xs[0]));
    for (std::size_t i = 1; i < times.size(); ++i) {
      theta = step_kernel(times[i - 1], times[i]).apply(theta);
      theta = theta.restricted_below(family_->measure_at(times[i]).cdf(xs[i]));
    }
    return theta.mass();
  }

  // Compares the process's own finite-dimensional law against the catenation
  // of its pair couplings on a threshold grid (marginal breakpoints plus
  // midpoints). Returns the maximal deviation.
  double markov_defect(const std::vector<double>& times) const {
    if (times.size() < 3) throw LengthMismatch("markov check needs at least three times");
    std::vector<std::vector<double>> grids;
    for (double t : times) grids.push_back(threshold_grid(family_->measure_at(t)));

    // catenation of pair couplings: junction averaging + pair level kernel
    std::vector<LevelKernel> cat;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
      LevelKernel pair = step_kernel(times[i], times[i + 1]);
      LevelKernel k = ell_of(family_->atomic_levels_at(times[i]));
      k = compose(k, pair);
      cat.push_back(compose(k, ell_of(family_->atomic_levels_at(times[i + 1]))));
    }
    auto chain = MarkovChainLaw::from_level_kernels(cat);

    std::vector<std::size_t> idx(times.size(), 0);
    double worst = 0;
    while (true) {
      std::vector<double> xs(times.size());
      for (std::size_t i = 0; i < times.size(); ++i) xs[i] = grids[i][idx[i]];
      std::vector<double> levels(times.size());
      for (std::size_t i = 0; i < times.size(); ++i)
        levels[i] = family_->measure_at(times[i]).cdf(xs[i]);
      worst = std::max(worst, std::fabs(fd_cdf(times, xs) - chain.fd_cdf_levels(levels)));
      std::size_t d = 0;
      while (d < idx.size() && ++idx[d] == grids[d].size()) idx[d++] = 0;
      if (d == idx.size()) break;
    }
    return worst;
  }

  bool markov_check(const std::vector<double>& times, double tol = kOrderTol) const {
    return markov_defect(times) <= tol;
  }

  // Sequential level-space sampling through the grid-adjacent step kernels;
  // per-path streams derive from (seed, path), so any thread count yields
  // bit-identical paths.
  PathEnsemble simulate(const std::vector<double>& grid, std::size_t n,
                        std::uint64_t seed) const {
    if (n < 1) throw OutOfRange("need at least one path");
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) throw OutOfRange("grid must increase");
    std::vector<LevelKernel> steps;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      steps.push_back(step_kernel(grid[i], grid[i + 1]));
    std::vector<RealMeasure> margs;
    for (double t : grid) margs.push_back(family_->measure_at(t));

    PathEnsemble out;
    out.grid = grid;
    out.seed = seed;
    out.values.assign(n * grid.size(), 0.0);

    auto run = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t p = lo; p < hi; ++p) {
        CounterRng rng(seed, p);
        double u = rng.next_level();
        out.values[p * grid.size()] = margs[0].quantile(u);
        for (std::size_t i = 0; i < steps.size(); ++i) {
          u = sample_row(steps[i], u, rng);
          out.values[p * grid.size() + i + 1] = margs[i + 1].quantile(u);
        }
      }
    };
    unsigned workers = std::min<unsigned>(worker_threads(), 8);
    if (workers <= 1 || n < 512) {
      run(0, n);
    } else {
      std::vector<std::thread> pool;
      std::size_t chunk = (n + workers - 1) / workers;
      for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo < hi) pool.emplace_back(run, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    return out;
  }

  // Analytic rate from the level-interval derivative, empirical rate from the
  // pair coupling over (t, t+h).
  JumpRates jump_rates(double t, int k, double h) const {
    if (!(h > 0)) throw OutOfRange("rate step must be positive");
    RealMeasure mu = family_->measure_at(t);
    double pk = mu.cdf(k) - mu.cdf_left(k);
    if (pk <= 1e-12) throw ZeroMass("state has no mass at this time");

    JumpRates out;
    auto dA = [&](double x) {
      if (auto d = family_->cdf_time_derivative(t, x)) return *d;
      // Richardson-extrapolated central differences
      auto fd = [&](double step) {
        return (family_->measure_at(t + step).cdf(x) - family_->measure_at(t - step).cdf(x)) /
               (2 * step);
      };
      double d1 = fd(h), d2 = fd(h / 2);
      return (4 * d2 - d1) / 3;
    };
    out.up_analytic = std::max(0.0, -dA(k)) / pk;
    out.down_analytic = std::max(0.0, dA(k - 1)) / pk;

    auto coupling = mq_coupling(t, t + h);
    out.up_empirical = coupling.point_mass(k, k + 1) / pk / h;
    out.down_empirical = coupling.point_mass(k, k - 1) / pk / h;
    return out;
  }

 private:
  static double sample_row(const LevelKernel& k, double u, CounterRng& rng) {
    auto row = k.row(u);
    double roll = rng.next_double();
    if (roll < row.ident) return u;
    roll -= row.ident;
    for (auto& [c, j] : row.mix) {
      if (roll < c) {
        // inverse-CDF sample of the piecewise-constant target
        const auto& t = k.target(j);
        double q = rng.next_level() * t.mass();
        const auto& b = t.breaks();
        const auto& d = t.values();
        double acc = 0;
        for (std::size_t i = 0; i + 1 < b.size(); ++i) {
          double cell = d[i] * (b[i + 1] - b[i]);
          if (acc + cell >= q && cell > 0) return b[i] + (q - acc) / d[i];
          acc += cell;
        }
        return b.back() - kGridTol;
      }
      roll -= c;
    }
    return u;  // row mass rounding
  }

  static std::vector<double> threshold_grid(const RealMeasure& m) {
    std::vector<double> v;
    for (std::size_t k = 0; k < m.piece_count(); ++k) {
      if (auto* a = std::get_if<Atom>(&m.piece(k)))
        v.push_back(a->x);
      else {
        auto& s = std::get<Segment>(m.piece(k));
        v.push_back(s.lo);
        v.push_back(s.hi);
      }
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<double> out;
    out.push_back(v.front() - 1);
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(v[i]);
      if (i + 1 < v.size()) out.push_back(0.5 * (v[i] + v[i + 1]));
    }
    return out;
  }

  const LevelKernel& open_interval_kernel(double s, double t) const {
    auto key = std::make_pair(s, t);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto r = L_interval(*family_, s, t, opt_);
    return cache_.emplace(key, std::move(r.coupling.kernel)).first->second;
  }

  FamilyPtr family_;
  ProcessKind kind_;
  std::vector<double> markov_at_;
  RefineOptions opt_;
  mutable std::map<std::pair<double, double>, LevelKernel> cache_;
};

inline RealCoupling mq_coupling(FamilyPtr family, double s, double t, RefineOptions opt = {}) {
  return ProcessHandle::markov_quantile(std::move(family), opt).mq_coupling(s, t);
}

}  // namespace mq
