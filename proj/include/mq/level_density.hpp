#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mq/common.hpp"

namespace mq {

inline std::vector<double> merge_grids(const std::vector<double>& a,
                                       const std::vector<double>& b) {
  std::vector<double> g;
  g.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(g));
  g.erase(std::unique(g.begin(), g.end(),
                      [](double x, double y) { return y - x <= kGridTol; }),
          g.end());
  if (g.empty() || g.front() != 0.0) g.insert(g.begin(), 0.0);
  g.back() = 1.0;
  return g;
}

// Finite positive measure on (0,1) with piecewise-constant density. The grid
// always spans [0,1]; absent regions carry density zero.
class LevelDensity {
 public:
  LevelDensity() : breaks_{0.0, 1.0}, dens_{0.0} {}
  LevelDensity(std::vector<double> breaks, std::vector<double> dens)
      : breaks_(std::move(breaks)), dens_(std::move(dens)) {
    canonicalize();
  }

  static LevelDensity lebesgue() { return LevelDensity({0.0, 1.0}, {1.0}); }
  static LevelDensity uniform_prob(double a, double b) {
    return LevelDensity({0.0, a, b, 1.0}, {0.0, 1.0 / (b - a), 0.0});
  }

  const std::vector<double>& breaks() const { return breaks_; }
  const std::vector<double>& values() const { return dens_; }

  double mass() const {
    double m = 0;
    for (std::size_t i = 0; i + 1 < breaks_.size(); ++i)
      m += dens_[i] * (breaks_[i + 1] - breaks_[i]);
    return m;
  }

  double cdf(double u) const {
    double acc = 0;
    for (std::size_t i = 0; i + 1 < breaks_.size() && breaks_[i] < u; ++i)
      acc += dens_[i] * (std::min(u, breaks_[i + 1]) - breaks_[i]);
    return acc;
  }

  double density_at(double u) const {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), u);
    std::size_t k = static_cast<std::size_t>(it - breaks_.begin());
    if (k == 0) return dens_.front();
    if (k >= breaks_.size()) return dens_.back();
    return dens_[k - 1];
  }

  LevelDensity restricted_below(double u) const {
    std::vector<double> nb{0.0}, nd;
    for (std::size_t i = 0; i + 1 < breaks_.size(); ++i) {
      double a = breaks_[i], b = breaks_[i + 1];
      if (a >= u) break;
      double c = std::min(b, u);
      nb.push_back(c);
      nd.push_back(dens_[i]);
    }
    if (nb.back() < 1.0) {
      nb.push_back(1.0);
      nd.push_back(0.0);
    }
    return LevelDensity(std::move(nb), std::move(nd));
  }

  // integral of (this density) * f over (0,1), f piecewise constant.
  double inner(const std::vector<double>& fb, const std::vector<double>& fv) const {
    double acc = 0;
    std::size_t i = 0, j = 0;
    double cur = 0.0;
    while (i + 1 < breaks_.size() && j + 1 < fb.size()) {
      double hi = std::min(breaks_[i + 1], fb[j + 1]);
      if (hi > cur) acc += dens_[i] * fv[j] * (hi - cur);
      cur = hi;
      if (breaks_[i + 1] <= hi) ++i;
      if (j + 1 < fb.size() && fb[j + 1] <= hi) ++j;
    }
    return acc;
  }
  double inner(const LevelDensity& f) const { return inner(f.breaks_, f.dens_); }

  LevelDensity scaled(double c) const {
    LevelDensity out = *this;
    for (auto& d : out.dens_) d *= c;
    return out;
  }

  LevelDensity plus(const LevelDensity& o) const {
    auto g = merge_grids(breaks_, o.breaks_);
    std::vector<double> nd(g.size() - 1);
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      double mid = 0.5 * (g[i] + g[i + 1]);
      nd[i] = density_at(mid) + o.density_at(mid);
    }
    return LevelDensity(std::move(g), std::move(nd));
  }

  // Pointwise product with a piecewise-constant function.
  LevelDensity times(const std::vector<double>& fb, const std::vector<double>& fv) const {
    auto g = merge_grids(breaks_, fb);
    std::vector<double> nd(g.size() - 1);
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      double mid = 0.5 * (g[i] + g[i + 1]);
      double f = 0;
      auto it = std::upper_bound(fb.begin(), fb.end(), mid);
      std::size_t k = static_cast<std::size_t>(it - fb.begin());
      if (k >= 1 && k <= fv.size()) f = fv[k - 1];
      nd[i] = density_at(mid) * f;
    }
    return LevelDensity(std::move(g), std::move(nd));
  }

  bool decreasing(double tol = kOrderTol) const {
    for (std::size_t i = 0; i + 1 < dens_.size(); ++i)
      if (dens_[i + 1] > dens_[i] + tol) return false;
    return true;
  }

  double sup_cdf_distance(const LevelDensity& o) const {
    auto g = merge_grids(breaks_, o.breaks_);
    double sup = 0;
    for (double u : g) sup = std::max(sup, std::fabs(cdf(u) - o.cdf(u)));
    return sup;
  }

  // Equal-mass stochastic comparison: this <=_sto other iff F_this >= F_other.
  bool sto_leq(const LevelDensity& o, double tol = kOrderTol) const {
    auto g = merge_grids(breaks_, o.breaks_);
    for (double u : g)
      if (cdf(u) < o.cdf(u) - tol) return false;
    return true;
  }

  bool cellwise_equal(const LevelDensity& o, double tol = kGridTol) const {
    if (breaks_ == o.breaks_ && dens_ == o.dens_) return true;
    for (double p : {0.211, 0.477, 0.743, 0.907})  // cheap rejection probes
      if (std::fabs(density_at(p) - o.density_at(p)) > tol) return false;
    auto g = merge_grids(breaks_, o.breaks_);
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      double mid = 0.5 * (g[i] + g[i + 1]);
      if (std::fabs(density_at(mid) - o.density_at(mid)) > tol) return false;
    }
    return true;
  }

 private:
  void canonicalize() {
    if (breaks_.size() < 2 || breaks_.size() != dens_.size() + 1)
      throw BadSpec("level density grid mismatch");
    std::vector<double> nb{0.0}, nd;
    for (std::size_t i = 0; i + 1 < breaks_.size(); ++i) {
      double w = breaks_[i + 1] - breaks_[i];
      if (w <= kGridTol) continue;
      double d = dens_[i];
      if (d < 0 && d > -1e-14) d = 0;
      if (d < 0) throw BadSpec("negative density");
      if (!nd.empty() && std::fabs(nd.back() - d) <= kGridTol)
        nb.back() = breaks_[i + 1];
      else {
        nb.push_back(breaks_[i + 1]);
        nd.push_back(d);
      }
    }
    if (nd.empty()) {
      nb = {0.0, 1.0};
      nd = {0.0};
    }
    nb.back() = 1.0;
    breaks_ = std::move(nb);
    dens_ = std::move(nd);
  }

  std::vector<double> breaks_;
  std::vector<double> dens_;
};

}  // namespace mq
