#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "mq/common.hpp"
#include "mq/kernel.hpp"
#include "mq/measure.hpp"

namespace mq {

inline AtomicLevelSet atomic_levels(const RealMeasure& m) {
  AtomicLevelSet A;
  for (auto& a : m.atoms()) A.intervals.push_back({a.level_lo, a.level_hi});
  return A;
}

// Levels reachable by the CDF of m: [0,1] minus the open atomic intervals.
inline AxisIntervals reachable_levels(const RealMeasure& m) {
  AxisIntervals out;
  double cur = 0.0;
  for (auto& a : m.atoms()) {
    out.push_back({cur, a.level_lo});
    cur = a.level_hi;
  }
  out.push_back({cur, 1.0});
  return out;
}

// Coupling of two real measures represented as (G_left x G_right)# level.
// No 2-D density is ever materialized; queries go through the level CDF.
class RealCoupling {
 public:
  RealCoupling(RealMeasure left, RealMeasure right, LevelCoupling level)
      : left_(std::move(left)), right_(std::move(right)), level_(std::move(level)) {}

  const RealMeasure& left() const { return left_; }
  const RealMeasure& right() const { return right_; }
  const LevelCoupling& level() const { return level_; }

  double cdf(double x, double y) const {
    return CouplingEval(level_.kernel).cdf(left_.cdf(x), right_.cdf(y));
  }

  // Mass of the single point (x, y); exact for atom pairs.
  double point_mass(double x, double y) const {
    CouplingEval e(level_.kernel);
    double u0 = left_.cdf_left(x), u1 = left_.cdf(x);
    double v0 = right_.cdf_left(y), v1 = right_.cdf(y);
    return e.cdf(u1, v1) - e.cdf(u0, v1) - e.cdf(u1, v0) + e.cdf(u0, v0);
  }

  // Largest P(Y <= y < X) over a value grid; zero iff the coupling is
  // concentrated on {x <= y} (scan breakpoints and midpoints of both margins).
  double increasing_coupling_defect() const {
    std::vector<double> ys;
    auto add = [&](const RealMeasure& m) {
      for (std::size_t k = 0; k < m.piece_count(); ++k) {
        if (auto* a = std::get_if<Atom>(&m.piece(k)))
          ys.push_back(a->x);
        else {
          auto& s = std::get<Segment>(m.piece(k));
          ys.push_back(s.lo);
          ys.push_back(s.hi);
        }
      }
    };
    add(left_);
    add(right_);
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    std::vector<double> probes = ys;
    for (std::size_t i = 0; i + 1 < ys.size(); ++i) probes.push_back(0.5 * (ys[i] + ys[i + 1]));
    CouplingEval e(level_.kernel);
    double worst = 0;
    for (double y : probes)
      worst = std::max(worst, right_.cdf(y) - e.cdf(left_.cdf(y), right_.cdf(y)));
    return worst;
  }

  friend RealCoupling compose(const RealCoupling& a, const RealCoupling& b) {
    if (a.right_.cdf_sup_distance(b.left_) > 1e-12)
      throw MarginalMismatch("composition needs matching middle marginal");
    LevelKernel mid = LevelKernel::averaging(atomic_levels(a.right_));
    return RealCoupling(a.left_, b.right_,
                        LevelCoupling{compose(compose(a.level_.kernel, mid), b.level_.kernel)});
  }

  friend RealCoupling transpose(const RealCoupling& c) {
    return RealCoupling(c.right_, c.left_, LevelCoupling{c.level_.kernel.transpose()});
  }

  friend DiffExtrema real_diff_extrema(const RealCoupling& a, const RealCoupling& b) {
    if (a.left_.cdf_sup_distance(b.left_) > 1e-12 ||
        a.right_.cdf_sup_distance(b.right_) > 1e-12)
      throw MarginalMismatch("rho / lo comparisons need equal marginals");
    AxisIntervals au = reachable_levels(a.left_);
    AxisIntervals av = reachable_levels(a.right_);
    return coupling_diff_extrema(a.level_.kernel, b.level_.kernel, &au, &av);
  }

 private:
  RealMeasure left_;
  RealMeasure right_;
  LevelCoupling level_;
};

// (G_mu x G_nu)# L: marginals are mu and nu exactly, by construction.
inline RealCoupling pushforward_coupling(const RealMeasure& mu, const RealMeasure& nu,
                                         const LevelCoupling& L) {
  return RealCoupling(mu, nu, L);
}

inline RealCoupling quantile_coupling(const RealMeasure& mu, const RealMeasure& nu) {
  return pushforward_coupling(mu, nu, LevelCoupling::identity());
}

inline double rho(const RealCoupling& a, const RealCoupling& b) {
  return real_diff_extrema(a, b).max_abs;
}

inline bool lo_leq(const RealCoupling& a, const RealCoupling& b, double tol = kOrderTol) {
  return real_diff_extrema(a, b).min_diff >= -tol;
}

// Markov law given by an initial marginal and level transitions between
// consecutive times; transitions built from RealCouplings insert the atomic
// averaging at the junction marginal, matching catenation of transport plans.
class MarkovChainLaw {
 public:
  static MarkovChainLaw from_level_kernels(std::vector<LevelKernel> steps) {
    MarkovChainLaw c;
    c.steps_ = std::move(steps);
    return c;
  }

  static MarkovChainLaw from_couplings(const std::vector<RealCoupling>& links) {
    if (links.empty()) throw BadSpec("chain needs at least one transition");
    MarkovChainLaw c;
    std::vector<RealMeasure> margs;
    margs.push_back(links[0].left());
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (i > 0 && links[i].left().cdf_sup_distance(links[i - 1].right()) > 1e-12)
        throw MarginalMismatch("adjacent chain marginals differ");
      margs.push_back(links[i].right());
    }
    for (std::size_t i = 0; i < links.size(); ++i) {
      LevelKernel k = links[i].level().kernel;
      k = compose(LevelKernel::averaging(atomic_levels(margs[i])), k);
      k = compose(k, LevelKernel::averaging(atomic_levels(margs[i + 1])));
      c.steps_.push_back(std::move(k));
    }
    c.marginals_ = std::move(margs);
    return c;
  }

  std::size_t time_count() const { return steps_.size() + 1; }
  const std::vector<RealMeasure>& marginals() const {
    if (!marginals_) throw MissingMarginal("level-only chain has no real marginals");
    return *marginals_;
  }

  // Lower-orthant mass at level thresholds: restrict, push, restrict, ...
  double fd_cdf_levels(const std::vector<double>& levels) const {
    if (levels.size() != time_count())
      throw LengthMismatch("threshold count must match time count");
    LevelDensity theta = LevelDensity::lebesgue().restricted_below(std::clamp(levels[0], 0.0, 1.0));
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      theta = steps_[i].apply(theta);
      theta = theta.restricted_below(std::clamp(levels[i + 1], 0.0, 1.0));
    }
    return theta.mass();
  }

  double fd_cdf(const std::vector<double>& xs) const {
    auto& margs = marginals();
    if (xs.size() != margs.size())
      throw LengthMismatch("threshold count must match time count");
    std::vector<double> levels(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) levels[i] = margs[i].cdf(xs[i]);
    return fd_cdf_levels(levels);
  }

 private:
  std::optional<std::vector<RealMeasure>> marginals_;
  std::vector<LevelKernel> steps_;
};

}  // namespace mq
