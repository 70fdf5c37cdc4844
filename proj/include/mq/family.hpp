#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mq/common.hpp"
#include "mq/measure.hpp"
#include "mq/piecewise.hpp"
#include "mq/real_coupling.hpp"

namespace mq {

// Time-indexed family of one-dimensional marginals. Explicit families list
// their atomic times exhaustively; parametric families answer pointwise
// queries and provide refinement anchors.
class MarginalFamily {
 public:
  virtual ~MarginalFamily() = default;

  virtual std::string name() const = 0;
  virtual std::pair<double, double> domain() const = 0;
  virtual RealMeasure measure_at(double t) const = 0;

  virtual AtomicLevelSet atomic_levels_at(double t) const {
    return atomic_levels(measure_at(t));
  }

  // Explicit families return their declared atomic times; parametric ones
  // return nothing and are handled by dyadic refinement.
  virtual std::optional<std::vector<double>> atomic_times_in(double s, double t,
                                                             bool open) const {
    (void)s;
    (void)t;
    (void)open;
    return std::nullopt;
  }

  // Times a refinement should always include (kinks, crossings).
  virtual std::vector<double> anchors_in(double s, double t) const {
    (void)s;
    (void)t;
    return {};
  }

  // d/dt F_t(x) when available in closed form (jump-rate computations).
  virtual std::optional<double> cdf_time_derivative(double t, double x) const {
    (void)t;
    (void)x;
    return std::nullopt;
  }
};

using FamilyPtr = std::shared_ptr<const MarginalFamily>;

class ExplicitFamily final : public MarginalFamily {
 public:
  ExplicitFamily(std::vector<std::pair<double, RealMeasure>> times, bool atomic_complete)
      : times_(std::move(times)), atomic_complete_(atomic_complete) {
    if (times_.empty()) throw BadSpec("explicit family needs at least one time");
    for (std::size_t i = 1; i < times_.size(); ++i)
      if (!(times_[i].first > times_[i - 1].first))
        throw BadSpec("explicit family times must be strictly increasing");
    if (!atomic_complete_)
      throw BadSpec("explicit families must declare atomic completeness");
  }

  std::string name() const override { return "explicit"; }
  std::pair<double, double> domain() const override {
    return {times_.front().first, times_.back().first};
  }

  RealMeasure measure_at(double t) const override {
    for (auto& [u, m] : times_)
      if (near(u, t, kGridTol * (1 + std::fabs(u)))) return m;
    throw MissingMarginal("no declared marginal at the queried time");
  }

  std::optional<std::vector<double>> atomic_times_in(double s, double t,
                                                     bool open) const override {
    std::vector<double> out;
    for (auto& [u, m] : times_) {
      bool inside = open ? (u > s && u < t) : (u >= s && u <= t);
      if (inside && !m.atoms().empty()) out.push_back(u);
    }
    return out;
  }

  const std::vector<std::pair<double, RealMeasure>>& declared() const { return times_; }

 private:
  std::vector<std::pair<double, RealMeasure>> times_;
  bool atomic_complete_;
};

// mu_t = Poisson(t), truncated where the remaining tail mass drops below
// 1e-12 (cap K) and renormalized.
class PoissonFamily final : public MarginalFamily {
 public:
  explicit PoissonFamily(double tmax = 1.0, int cap = 40) : tmax_(tmax), cap_(cap) {}

  std::string name() const override { return "poisson"; }
  std::pair<double, double> domain() const override { return {0.0, tmax_}; }

  RealMeasure measure_at(double t) const override {
    if (t < -kGridTol) throw OutOfRange("poisson needs t >= 0");
    if (t <= kGridTol) return RealMeasure::dirac(0.0);
    std::vector<std::pair<double, Piece>> pieces;
    double p = std::exp(-t);
    double tail = 1.0;
    for (int k = 0; k <= cap_; ++k) {
      if (k > 0) p *= t / k;
      if (tail < 1e-12) break;
      if (p > 0) pieces.push_back({p, Atom{double(k)}});
      tail -= p;
    }
    double total = 0;
    for (auto& [w, q] : pieces) total += w;
    for (auto& [w, q] : pieces) w /= total;
    return RealMeasure::from_pieces(pieces);
  }

  std::optional<double> cdf_time_derivative(double t, double x) const override {
    // d/dt sum_{i<=k} e^{-t} t^i / i! = -e^{-t} t^k / k!
    if (x < 0) return 0.0;
    int k = static_cast<int>(std::floor(x));
    return -std::exp(-t + k * std::log(t) - std::lgamma(k + 1.0));
  }

 private:
  double tmax_;
  int cap_;
};

class BinomialFamily final : public MarginalFamily {
 public:
  explicit BinomialFamily(int n) : n_(n) {
    if (n_ < 1) throw BadSpec("binomial needs n >= 1");
  }

  std::string name() const override { return "binomial"; }
  std::pair<double, double> domain() const override { return {0.0, 1.0}; }

  RealMeasure measure_at(double t) const override {
    if (t < -kGridTol || t > 1 + kGridTol) throw OutOfRange("binomial needs t in [0,1]");
    t = std::clamp(t, 0.0, 1.0);
    std::vector<std::pair<double, Piece>> pieces;
    for (int k = 0; k <= n_; ++k) {
      double w = binom(n_, k) * std::pow(t, k) * std::pow(1 - t, n_ - k);
      if (w > 1e-15) pieces.push_back({w, Atom{double(k)}});
    }
    double total = 0;
    for (auto& [w, q] : pieces) total += w;
    for (auto& [w, q] : pieces) w /= total;
    return RealMeasure::from_pieces(pieces);
  }

  std::optional<double> cdf_time_derivative(double t, double x) const override {
    // d/dt sum_{i<=k} C(n,i) t^i (1-t)^(n-i) = -n C(n-1,k) t^k (1-t)^(n-1-k)
    if (x < 0) return 0.0;
    int k = static_cast<int>(std::floor(x));
    if (k >= n_) return 0.0;
    return -n_ * binom(n_ - 1, k) * std::pow(t, k) * std::pow(1 - t, n_ - 1 - k);
  }

  int n() const { return n_; }

 private:
  static double binom(int n, int k) {
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }
  int n_;
};

// mu_t = a(t) d_0 + (1 - a(t)) d_1.
class TwoAtomFamily final : public MarginalFamily {
 public:
  explicit TwoAtomFamily(PiecewiseLinear a) : a_(std::move(a)) {}

  std::string name() const override { return "two_atom"; }
  std::pair<double, double> domain() const override {
    return {a_.front_time(), a_.back_time()};
  }

  RealMeasure measure_at(double t) const override {
    double a = a_(t);
    if (a < -kGridTol || a > 1 + kGridTol) throw BadSpec("two_atom weight outside [0,1]");
    a = std::clamp(a, 0.0, 1.0);
    if (a <= kGridTol) return RealMeasure::dirac(1.0);
    if (a >= 1 - kGridTol) return RealMeasure::dirac(0.0);
    return make_measure({{a, Atom{0.0}}, {1 - a, Atom{1.0}}});
  }

  std::vector<double> anchors_in(double s, double t) const override {
    std::vector<double> out;
    for (double b : a_.breakpoints())
      if (b > s && b < t) out.push_back(b);
    return out;
  }

  const PiecewiseLinear& weight() const { return a_; }

 private:
  PiecewiseLinear a_;
};

// mu_t = d_{g(t)}.
class DiracPathFamily final : public MarginalFamily {
 public:
  explicit DiracPathFamily(PiecewiseLinear g) : g_(std::move(g)) {}

  std::string name() const override { return "dirac_path"; }
  std::pair<double, double> domain() const override {
    return {g_.front_time(), g_.back_time()};
  }
  RealMeasure measure_at(double t) const override { return RealMeasure::dirac(g_(t)); }

  std::vector<double> anchors_in(double s, double t) const override {
    std::vector<double> out;
    for (double b : g_.breakpoints())
      if (b > s && b < t) out.push_back(b);
    return out;
  }

  const PiecewiseLinear& path() const { return g_; }

 private:
  PiecewiseLinear g_;
};

// Two uniform blocks of mass 1/2 translating in opposite directions:
// mu_t = 1/2 U[t-2, t-1] + 1/2 U[1-t, 2-t] on [0, 3]; diffuse at every time.
class CrossingUniformsFamily final : public MarginalFamily {
 public:
  std::string name() const override { return "crossing_uniforms"; }
  std::pair<double, double> domain() const override { return {0.0, 3.0}; }

  RealMeasure measure_at(double t) const override {
    return measure_from_mixture({}, {{{t - 2, t - 1, 0.5}}, {{1 - t, 2 - t, 0.5}}});
  }
};

// One atom crossing a diffuse block: mu_t = 1/2 d_0 + 1/2 U[t-3/4, t-1/4].
class AtomOverDiffuseFamily final : public MarginalFamily {
 public:
  std::string name() const override { return "atom_over_diffuse"; }
  std::pair<double, double> domain() const override { return {0.0, 1.0}; }

  RealMeasure measure_at(double t) const override {
    double lo = t - 0.75, hi = t - 0.25;
    if (near(0.0, lo) || near(0.0, hi))
      lo += 1e-9;  // keep the atom off the block edge
    return measure_from_mixture({{0.0, 0.5}}, {{{lo, hi, 0.5}}});
  }
};

// Atom at 0 of weight B(t) under a diffuse remainder (truncated exponential
// approximated by an equal-mass quantile polyline; only the atomic level
// interval (0, B(t)) matters to the level kernels).
class AtomLowerLevelsFamily final : public MarginalFamily {
 public:
  explicit AtomLowerLevelsFamily(PiecewiseLinear B, int diffuse_pieces = 32)
      : B_(std::move(B)), pieces_(diffuse_pieces) {}

  std::string name() const override { return "atom_lower_levels"; }
  std::pair<double, double> domain() const override {
    return {B_.front_time(), B_.back_time()};
  }

  RealMeasure measure_at(double t) const override {
    double b = std::clamp(B_(t), 0.0, 1.0);
    std::vector<std::pair<double, Piece>> pieces;
    if (b > kGridTol) pieces.push_back({b, Atom{0.0}});
    if (b < 1 - kGridTol) {
      double rest = 1 - b;
      double qmax = 1 - 1e-13;  // truncate the exponential tail
      for (int i = 0; i < pieces_; ++i) {
        double q0 = double(i) / pieces_ * qmax, q1 = double(i + 1) / pieces_ * qmax;
        pieces.push_back({rest * (q1 - q0) / qmax,
                          Segment{-std::log1p(-q0), -std::log1p(-q1)}});
      }
    }
    return RealMeasure::from_pieces(pieces);
  }

  AtomicLevelSet atomic_levels_at(double t) const override {
    double b = std::clamp(B_(t), 0.0, 1.0);
    if (b <= kGridTol) return {};
    return AtomicLevelSet{{{0.0, b}}};
  }

  std::vector<double> anchors_in(double s, double t) const override {
    std::vector<double> out;
    for (double b : B_.breakpoints())
      if (b > s && b < t) out.push_back(b);
    return out;
  }

  const PiecewiseLinear& bound() const { return B_; }

 private:
  PiecewiseLinear B_;
  int pieces_;
};

// Time reversal: nu_t = mu_{-t}; used for the reversal identities.
class ReversedFamily final : public MarginalFamily {
 public:
  explicit ReversedFamily(FamilyPtr base) : base_(std::move(base)) {}

  std::string name() const override { return base_->name() + "_reversed"; }
  std::pair<double, double> domain() const override {
    auto [a, b] = base_->domain();
    return {-b, -a};
  }
  RealMeasure measure_at(double t) const override { return base_->measure_at(-t); }
  AtomicLevelSet atomic_levels_at(double t) const override {
    return base_->atomic_levels_at(-t);
  }
  std::optional<std::vector<double>> atomic_times_in(double s, double t,
                                                     bool open) const override {
    auto base = base_->atomic_times_in(-t, -s, open);
    if (!base) return std::nullopt;
    std::vector<double> out;
    for (auto it = base->rbegin(); it != base->rend(); ++it) out.push_back(-*it);
    return out;
  }
  std::vector<double> anchors_in(double s, double t) const override {
    auto base = base_->anchors_in(-t, -s);
    std::vector<double> out;
    for (auto it = base.rbegin(); it != base.rend(); ++it) out.push_back(-*it);
    return out;
  }

 private:
  FamilyPtr base_;
};

}  // namespace mq
