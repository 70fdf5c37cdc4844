#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "mq/common.hpp"
#include "mq/level_density.hpp"

namespace mq {

inline constexpr std::size_t kMaxTargets = 4096;

// Disjoint open level intervals merged by the quantile function at the atoms
// of one marginal.
struct AtomicLevelSet {
  std::vector<std::pair<double, double>> intervals;  // disjoint, increasing
  bool empty() const { return intervals.empty(); }
};

// Kernel on (0,1) in mixture form: on each source cell, an identity weight a
// plus coefficients c_j on shared probability targets eta_j, a + sum c_j = 1.
class LevelKernel {
 public:
  LevelKernel() : grid_{0.0, 1.0}, ident_{1.0} {}

  static LevelKernel identity() { return LevelKernel(); }

  static LevelKernel full_average() {
    LevelKernel k;
    k.ident_ = {0.0};
    k.targets_ = {LevelDensity::lebesgue()};
    k.coef_ = {{1.0}};
    return k;
  }

  // Every row equals the given probability density.
  static LevelKernel constant_rows(LevelDensity eta) {
    LevelKernel k;
    k.ident_ = {0.0};
    k.targets_ = {std::move(eta)};
    k.coef_ = {{1.0}};
    return k;
  }

  // ell_r: identity off the atomic level set, uniform averaging on each of
  // its intervals.
  static LevelKernel averaging(const AtomicLevelSet& A) {
    LevelKernel k;
    k.grid_ = {0.0};
    std::vector<int> tag;  // -1 identity cell, else target index
    for (auto& [a, b] : A.intervals) {
      if (b - a <= kGridTol) continue;
      if (a > k.grid_.back() + kGridTol) {
        k.grid_.push_back(a);
        tag.push_back(-1);
      }
      double lo = k.grid_.back();
      k.grid_.push_back(b);
      tag.push_back(static_cast<int>(k.targets_.size()));
      k.targets_.push_back(LevelDensity::uniform_prob(lo, b));
    }
    if (k.targets_.empty()) return identity();
    if (k.grid_.back() < 1.0 - kGridTol) {
      k.grid_.push_back(1.0);
      tag.push_back(-1);
    }
    k.grid_.back() = 1.0;
    std::size_t cells = k.grid_.size() - 1;
    k.ident_.assign(cells, 0.0);
    k.coef_.assign(k.targets_.size(), std::vector<double>(cells, 0.0));
    for (std::size_t i = 0; i < cells; ++i) {
      if (tag[i] < 0)
        k.ident_[i] = 1.0;
      else
        k.coef_[static_cast<std::size_t>(tag[i])][i] = 1.0;
    }
    return k;  // targets are distinct and rows exact by construction
  }

  static LevelKernel from_parts(std::vector<double> grid, std::vector<double> ident,
                                std::vector<std::vector<double>> coef,
                                std::vector<LevelDensity> targets) {
    LevelKernel k;
    k.grid_ = std::move(grid);
    k.ident_ = std::move(ident);
    k.coef_ = std::move(coef);
    k.targets_ = std::move(targets);
    k.canonicalize();
    return k;
  }

  const std::vector<double>& grid() const { return grid_; }
  std::size_t cell_count() const { return grid_.size() - 1; }
  std::size_t target_count() const { return targets_.size(); }
  const LevelDensity& target(std::size_t j) const { return targets_[j]; }
  double ident_at(double u) const { return cell_lookup(ident_, u); }
  double coef_at(std::size_t j, double u) const { return cell_lookup(coef_[j], u); }

  bool is_identity() const { return targets_.empty(); }

  // theta . k : exact pushforward of a level measure.
  LevelDensity apply(const LevelDensity& theta) const {
    LevelDensity out = theta.times(grid_, ident_);
    for (std::size_t j = 0; j < targets_.size(); ++j) {
      double m = theta.inner(grid_, coef_[j]);
      if (m > 0) out = out.plus(targets_[j].scaled(m));
    }
    return out;
  }

  // Second marginal of Joint(lambda, k).
  LevelDensity second_marginal() const {
    return apply(LevelDensity::lebesgue());
  }

  bool doubly_stochastic(double tol = kOrderTol) const {
    return second_marginal().sup_cdf_distance(LevelDensity::lebesgue()) <= tol;
  }

  // Convex combination of rows: w*L + (1-w)*R.
  friend LevelKernel mix(const LevelKernel& L, const LevelKernel& R, double w) {
    LevelKernel out;
    out.grid_ = merge_grids(L.grid_, R.grid_);
    std::size_t cells = out.grid_.size() - 1;
    out.ident_.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      double mid = 0.5 * (out.grid_[i] + out.grid_[i + 1]);
      out.ident_[i] = w * L.ident_at(mid) + (1 - w) * R.ident_at(mid);
    }
    for (auto [src, scale] : {std::pair{&L, w}, std::pair{&R, 1 - w}})
      for (std::size_t j = 0; j < src->targets_.size(); ++j) {
        out.targets_.push_back(src->targets_[j]);
        std::vector<double> cv(cells);
        for (std::size_t i = 0; i < cells; ++i)
          cv[i] = scale * src->coef_at(j, 0.5 * (out.grid_[i] + out.grid_[i + 1]));
        out.coef_.push_back(std::move(cv));
      }
    out.canonicalize();
    return out;
  }

  // Mixture-form composition (this, then next).
  friend LevelKernel compose(const LevelKernel& L, const LevelKernel& R) {
    if (L.is_identity()) return R;
    if (R.is_identity()) return L;

    bool left_ident = false, right_ident = false;
    for (double a : L.ident_) left_ident = left_ident || a > 0;
    for (double a : R.ident_) right_ident = right_ident || a > 0;

    if (!left_ident && !right_ident) {
      // Pure-mixing case: rows depend on x only through the left coefficients,
      // so the left grid carries the result and the targets are exactly the
      // right targets (already distinct).
      LevelKernel out;
      out.grid_ = L.grid_;
      std::size_t cells = out.grid_.size() - 1;
      out.ident_.assign(cells, 0.0);
      out.targets_ = R.targets_;
      out.coef_.assign(R.targets_.size(), std::vector<double>(cells, 0.0));
      std::vector<std::vector<double>> w(L.targets_.size(),
                                         std::vector<double>(R.targets_.size()));
      for (std::size_t j = 0; j < L.targets_.size(); ++j)
        for (std::size_t i = 0; i < R.targets_.size(); ++i)
          w[j][i] = L.targets_[j].inner(R.grid_, R.coef_[i]);
      for (std::size_t c = 0; c < cells; ++c) {
        double row = 0;
        for (std::size_t i = 0; i < R.targets_.size(); ++i) {
          double v = 0;
          for (std::size_t j = 0; j < L.targets_.size(); ++j) v += L.coef_[j][c] * w[j][i];
          out.coef_[i][c] = v;
          row += v;
        }
        if (std::fabs(row - 1.0) > 1e-9) throw BadSpec("kernel row mass drifted from 1");
        for (std::size_t i = 0; i < R.targets_.size(); ++i) out.coef_[i][c] /= row;
      }
      out.merge_equal_cells();
      return out;
    }

    LevelKernel out;
    out.grid_ = merge_grids(L.grid_, R.grid_);
    std::size_t cells = out.grid_.size() - 1;

    std::vector<double> la(cells), ra(cells);
    std::vector<std::vector<double>> lc(L.targets_.size(), std::vector<double>(cells));
    std::vector<std::vector<double>> rc(R.targets_.size(), std::vector<double>(cells));
    for (std::size_t i = 0; i < cells; ++i) {
      double mid = 0.5 * (out.grid_[i] + out.grid_[i + 1]);
      la[i] = L.ident_at(mid);
      ra[i] = R.ident_at(mid);
      for (std::size_t j = 0; j < L.targets_.size(); ++j) lc[j][i] = L.coef_at(j, mid);
      for (std::size_t j = 0; j < R.targets_.size(); ++j) rc[j][i] = R.coef_at(j, mid);
    }

    out.ident_.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) out.ident_[i] = la[i] * ra[i];

    // Right targets keep their identity; weights w_ji = <eta_j, c'_i>.
    out.targets_ = R.targets_;
    out.coef_.assign(R.targets_.size(), std::vector<double>(cells, 0.0));
    std::vector<std::vector<double>> w(L.targets_.size(),
                                       std::vector<double>(R.targets_.size()));
    for (std::size_t j = 0; j < L.targets_.size(); ++j)
      for (std::size_t i = 0; i < R.targets_.size(); ++i)
        w[j][i] = L.targets_[j].inner(R.grid_, R.coef_[i]);
    for (std::size_t i = 0; i < R.targets_.size(); ++i)
      for (std::size_t c = 0; c < cells; ++c) {
        double v = la[c] * rc[i][c];
        for (std::size_t j = 0; j < L.targets_.size(); ++j) v += lc[j][c] * w[j][i];
        out.coef_[i][c] = v;
      }

    // Left targets survive through the right identity part.
    bool right_has_ident = false;
    for (double a : R.ident_) right_has_ident = right_has_ident || a > 0;
    if (right_has_ident) {
      for (std::size_t j = 0; j < L.targets_.size(); ++j) {
        LevelDensity part = L.targets_[j].times(R.grid_, R.ident_);
        double m = part.mass();
        if (m <= kGridTol) continue;
        out.targets_.push_back(part.scaled(1.0 / m));
        std::vector<double> cv(cells);
        for (std::size_t c = 0; c < cells; ++c) cv[c] = lc[j][c] * m;
        out.coef_.push_back(std::move(cv));
      }
    }
    out.canonicalize();
    if (out.targets_.size() > kMaxTargets)
      throw CapacityError("composition exceeded the target cap");
    return out;
  }

  // Transpose of Joint(lambda, k) with respect to lambda. Requires lambda.k =
  // lambda. Block (c_j lambda) (x) eta_j becomes eta_j (x) (c_j lambda).
  LevelKernel transpose() const {
    if (!doubly_stochastic())
      throw NotDoublyStochastic("transpose requires lambda-invariance");
    LevelKernel out;
    out.grid_ = grid_;
    for (auto& t : targets_) out.grid_ = merge_grids(out.grid_, t.breaks());
    std::size_t cells = out.grid_.size() - 1;
    out.ident_.resize(cells);
    for (std::size_t i = 0; i < cells; ++i)
      out.ident_[i] = ident_at(0.5 * (out.grid_[i] + out.grid_[i + 1]));
    for (std::size_t j = 0; j < targets_.size(); ++j) {
      double m = 0;  // mass of block j = integral of c_j
      for (std::size_t c = 0; c + 1 < grid_.size(); ++c)
        m += coef_[j][c] * (grid_[c + 1] - grid_[c]);
      if (m <= kGridTol) continue;
      out.targets_.push_back(
          LevelDensity(grid_, coef_[j]).scaled(1.0 / m));
      std::vector<double> cv(cells);
      for (std::size_t i = 0; i < cells; ++i)
        cv[i] = m * targets_[j].density_at(0.5 * (out.grid_[i] + out.grid_[i + 1]));
      out.coef_.push_back(std::move(cv));
    }
    out.canonicalize();
    return out;
  }

  // x -> k(x, [0,v]) must be non-increasing for every threshold v.
  bool increasing_kernel(double tol = kOrderTol) const {
    std::vector<double> vs = grid_;
    for (auto& t : targets_) vs = merge_grids(vs, t.breaks());
    std::vector<double> probes;
    for (std::size_t i = 0; i + 1 < vs.size(); ++i) {
      probes.push_back(vs[i]);
      probes.push_back(0.5 * (vs[i] + vs[i + 1]));
    }
    probes.push_back(1.0);
    for (double v : probes) {
      // cell values of x -> k(x, [0,v]), splitting the cell containing v.
      double prev = 0;
      bool first = true;
      for (std::size_t c = 0; c + 1 < grid_.size(); ++c) {
        double lo = grid_[c], hi = grid_[c + 1];
        double base = 0;
        for (std::size_t j = 0; j < targets_.size(); ++j)
          base += coef_[j][c] * targets_[j].cdf(v);
        for (int half = 0; half < 2; ++half) {
          double a = half == 0 ? lo : std::max(lo, std::min(v, hi));
          double b = half == 0 ? std::max(lo, std::min(v, hi)) : hi;
          if (b - a <= 0) continue;
          double val = base + (b <= v ? ident_[c] : 0.0);
          if (!first && val > prev + tol) return false;
          prev = val;
          first = false;
        }
      }
    }
    return true;
  }

  struct Row {
    double ident;
    std::vector<std::pair<double, std::size_t>> mix;  // (coef, target index)
  };
  Row row(double u) const {
    Row r;
    r.ident = ident_at(u);
    for (std::size_t j = 0; j < targets_.size(); ++j) {
      double c = coef_at(j, u);
      if (c > 0) r.mix.push_back({c, j});
    }
    return r;
  }

  void canonicalize() {
    // Drop empty targets, deduplicate cell-wise equal targets, merge targets
    // whose coefficient vectors are proportional (they always mix in a fixed
    // ratio, hence form a single target), merge cells with identical rows,
    // renormalize rows.
    std::vector<LevelDensity> nt;
    std::vector<std::vector<double>> nc;
    for (std::size_t j = 0; j < targets_.size(); ++j) {
      double mx = 0;
      for (double c : coef_[j]) mx = std::max(mx, c);
      if (mx <= 1e-15) continue;
      bool merged = false;
      for (std::size_t p = 0; p < nt.size(); ++p)
        if (nt[p].cellwise_equal(targets_[j])) {
          for (std::size_t c = 0; c < coef_[j].size(); ++c) nc[p][c] += coef_[j][c];
          merged = true;
          break;
        }
      if (!merged) {
        nt.push_back(targets_[j]);
        nc.push_back(coef_[j]);
      }
    }
    for (std::size_t p = 0; p < nt.size(); ++p) {
      for (std::size_t q = p + 1; q < nt.size();) {
        double ratio = 0;
        bool prop = true;
        for (std::size_t c = 0; c < nc[p].size() && prop; ++c) {
          double a = nc[p][c], b = nc[q][c];
          if (a <= 1e-15 && b <= 1e-15) continue;
          if (a <= 1e-15 || b <= 1e-15) {
            prop = false;
          } else if (ratio == 0) {
            ratio = b / a;
          } else {
            prop = std::fabs(b / a - ratio) <= 1e-12 * (1 + ratio);
          }
        }
        if (prop && ratio > 0) {
          nt[p] = nt[p].scaled(1.0 / (1 + ratio)).plus(nt[q].scaled(ratio / (1 + ratio)));
          for (std::size_t c = 0; c < nc[p].size(); ++c) nc[p][c] += nc[q][c];
          nt.erase(nt.begin() + q);
          nc.erase(nc.begin() + q);
        } else {
          ++q;
        }
      }
    }
    targets_ = std::move(nt);
    coef_ = std::move(nc);

    for (std::size_t c = 0; c + 1 < grid_.size(); ++c) {
      double s = ident_[c];
      for (auto& cv : coef_) s += cv[c];
      if (std::fabs(s - 1.0) > 1e-9)
        throw BadSpec("kernel row mass drifted from 1");
      ident_[c] /= s;
      for (auto& cv : coef_) cv[c] /= s;
    }
    merge_equal_cells();
  }

  void merge_equal_cells() {
    std::vector<double> ng{0.0};
    std::vector<double> ni;
    std::vector<std::vector<double>> ncf(coef_.size());
    for (std::size_t c = 0; c + 1 < grid_.size(); ++c) {
      double w = grid_[c + 1] - grid_[c];
      if (w <= kGridTol && c + 2 < grid_.size()) continue;
      bool same = !ni.empty() && std::fabs(ni.back() - ident_[c]) <= kGridTol;
      if (same)
        for (std::size_t j = 0; j < coef_.size(); ++j)
          if (std::fabs(ncf[j].back() - coef_[j][c]) > kGridTol) {
            same = false;
            break;
          }
      if (same) {
        ng.back() = grid_[c + 1];
      } else {
        ng.push_back(grid_[c + 1]);
        ni.push_back(ident_[c]);
        for (std::size_t j = 0; j < coef_.size(); ++j) ncf[j].push_back(coef_[j][c]);
      }
    }
    ng.back() = 1.0;
    grid_ = std::move(ng);
    ident_ = std::move(ni);
    coef_ = std::move(ncf);
  }

 private:
  double cell_lookup(const std::vector<double>& vals, double u) const {
    auto it = std::upper_bound(grid_.begin(), grid_.end(), u);
    std::size_t k = static_cast<std::size_t>(it - grid_.begin());
    if (k == 0) return vals.front();
    if (k > vals.size()) return vals.back();
    return vals[k - 1];
  }

  std::vector<double> grid_;
  std::vector<double> ident_;
  std::vector<std::vector<double>> coef_;
  std::vector<LevelDensity> targets_;
};

// Joint(lambda, kernel) on (0,1)^2.
struct LevelCoupling {
  LevelKernel kernel;

  static LevelCoupling identity() { return {LevelKernel::identity()}; }
  static LevelCoupling product() { return {LevelKernel::full_average()}; }
};

// Exact CDF evaluator: F(u,v) = A(min(u,v)) + sum_j C_j(u) H_j(v) with A, C_j
// prefix integrals of the identity weight and coefficients and H_j the target
// CDFs. All pieces are affine between grid nodes.
class CouplingEval {
 public:
  explicit CouplingEval(const LevelKernel& k) : k_(&k) {
    axis_ = k.grid();
    for (std::size_t j = 0; j < k.target_count(); ++j)
      axis_ = merge_grids(axis_, k.target(j).breaks());
    std::size_t n = axis_.size();
    A_.assign(n, 0.0);
    C_.assign(k.target_count(), std::vector<double>(n, 0.0));
    H_.assign(k.target_count(), std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double mid = 0.5 * (axis_[i] + axis_[i + 1]);
      double w = axis_[i + 1] - axis_[i];
      A_[i + 1] = A_[i] + k.ident_at(mid) * w;
      for (std::size_t j = 0; j < k.target_count(); ++j)
        C_[j][i + 1] = C_[j][i] + k.coef_at(j, mid) * w;
    }
    for (std::size_t j = 0; j < k.target_count(); ++j)
      for (std::size_t i = 0; i < n; ++i) H_[j][i] = k.target(j).cdf(axis_[i]);
  }

  const std::vector<double>& axis() const { return axis_; }

  double prefix_ident(double u) const { return interp(A_, u); }
  double ident_weight_at(double u) const { return k_->ident_at(u); }

  double cdf(double u, double v) const {
    double f = interp(A_, std::min(u, v));
    for (std::size_t j = 0; j < C_.size(); ++j) f += interp(C_[j], u) * interp(H_[j], v);
    return f;
  }

  // Corner matrix on the given axis grid (must contain this eval's kinks).
  std::vector<std::vector<double>> corners(const std::vector<double>& g) const {
    std::size_t n = g.size();
    std::vector<std::vector<double>> F(n, std::vector<double>(n, 0.0));
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = interp(A_, g[i]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l) F[i][l] = a[std::min(i, l)];
    for (std::size_t j = 0; j < C_.size(); ++j) {
      std::vector<double> cu(n), hv(n);
      for (std::size_t i = 0; i < n; ++i) {
        cu[i] = interp(C_[j], g[i]);
        hv[i] = interp(H_[j], g[i]);
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (cu[i] == 0.0) continue;
        for (std::size_t l = 0; l < n; ++l) F[i][l] += cu[i] * hv[l];
      }
    }
    return F;
  }

 private:
  double interp(const std::vector<double>& pre, double u) const {
    if (u <= axis_.front()) return pre.front();
    if (u >= axis_.back()) return pre.back();
    auto it = std::upper_bound(axis_.begin(), axis_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - axis_.begin()) - 1;
    double w = axis_[i + 1] - axis_[i];
    double s = w > 0 ? (u - axis_[i]) / w : 0.0;
    return pre[i] + (pre[i + 1] - pre[i]) * s;
  }

  const LevelKernel* k_;
  std::vector<double> axis_;
  std::vector<double> A_;
  std::vector<std::vector<double>> C_;
  std::vector<std::vector<double>> H_;
};

// Extrema of F1 - F2 over [0,1]^2 (optionally restricted to a union of closed
// intervals per axis). Grid corners are exact for the bilinear part; on cells
// crossing the diagonal, the identity weight contributes a min(u,v) ramp whose
// diagonal restriction is quadratic, so its vertex is checked as well.
struct DiffExtrema {
  double max_abs = 0;
  double min_diff = 0;
  double max_diff = 0;
};

using AxisIntervals = std::vector<std::pair<double, double>>;

inline DiffExtrema coupling_diff_extrema(
    const LevelKernel& k1, const LevelKernel& k2,
    const AxisIntervals* allowed_u = nullptr, const AxisIntervals* allowed_v = nullptr) {
  CouplingEval e1(k1), e2(k2);
  std::vector<double> g = merge_grids(e1.axis(), e2.axis());
  auto insert_ends = [&](const AxisIntervals* iv) {
    if (!iv) return;
    std::vector<double> extra;
    for (auto& [a, b] : *iv) {
      extra.push_back(a);
      extra.push_back(b);
    }
    std::sort(extra.begin(), extra.end());
    g = merge_grids(g, extra);
  };
  insert_ends(allowed_u);
  insert_ends(allowed_v);

  auto point_ok = [](const AxisIntervals* iv, double x) {
    if (!iv) return true;
    for (auto& [a, b] : *iv)
      if (x >= a - kGridTol && x <= b + kGridTol) return true;
    return false;
  };

  std::size_t n = g.size();
  auto F1 = e1.corners(g);
  auto F2 = e2.corners(g);

  DiffExtrema out;
  bool first = true;
  auto feed = [&](double d) {
    if (first) {
      out.min_diff = out.max_diff = d;
      first = false;
    } else {
      out.min_diff = std::min(out.min_diff, d);
      out.max_diff = std::max(out.max_diff, d);
    }
  };
  std::vector<bool> uok(n), vok(n);
  for (std::size_t i = 0; i < n; ++i) {
    uok[i] = point_ok(allowed_u, g[i]);
    vok[i] = point_ok(allowed_v, g[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!uok[i]) continue;
    for (std::size_t l = 0; l < n; ++l)
      if (vok[l]) feed(F1[i][l] - F2[i][l]);
  }
  // Diagonal cells: quadratic vertex of the difference along u = v.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!uok[i] || !uok[i + 1] || !vok[i] || !vok[i + 1]) continue;
    double mid = 0.5 * (g[i] + g[i + 1]);
    double dm = e1.ident_weight_at(mid) - e2.ident_weight_at(mid);
    double w = g[i + 1] - g[i];
    if (w <= 0) continue;
    double D00 = F1[i][i] - F2[i][i], D10 = F1[i + 1][i] - F2[i + 1][i];
    double D01 = F1[i][i + 1] - F2[i][i + 1], D11 = F1[i + 1][i + 1] - F2[i + 1][i + 1];
    // Bilinear parts through corners after removing the ramp dm*min(u,v).
    double B00 = D00 - dm * g[i], B10 = D10 - dm * g[i], B01 = D01 - dm * g[i];
    double B11 = D11 - dm * g[i + 1];
    // q(s) = D on the diagonal, s in [0,1].
    double qa = B00 - B10 - B01 + B11;          // s^2
    double qb = (B10 + B01 - 2 * B00) + dm * w;  // s
    double qc = B00 + dm * g[i];
    if (std::fabs(qa) > 0) {
      double s = -qb / (2 * qa);
      if (s > 0 && s < 1) feed(qa * s * s + qb * s + qc);
    }
  }
  out.max_abs = std::max(std::fabs(out.min_diff), std::fabs(out.max_diff));
  return out;
}

inline double rho(const LevelCoupling& a, const LevelCoupling& b) {
  return coupling_diff_extrema(a.kernel, b.kernel).max_abs;
}

inline bool lo_leq(const LevelCoupling& a, const LevelCoupling& b, double tol = kOrderTol) {
  // a <=_lo b iff F_a >= F_b everywhere.
  return coupling_diff_extrema(a.kernel, b.kernel).min_diff >= -tol;
}

inline double coupling_cdf(const LevelCoupling& L, double u, double v) {
  if (u < -kGridTol || u > 1 + kGridTol || v < -kGridTol || v > 1 + kGridTol)
    throw OutOfRange("coupling cdf argument outside [0,1]^2");
  return CouplingEval(L.kernel).cdf(std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0));
}

// --- lower-orthant supremum -------------------------------------------------

struct WitnessRect {
  double u0, u1, v0, v1;
  double mass;
};

struct LosupResult {
  bool valid = false;
  std::optional<WitnessRect> witness;
  std::optional<LevelCoupling> coupling;
};

// Core grid check shared by coupling and point-measure encodings: candidate
// F = pointwise min of the inputs at grid corners; valid iff every elementary
// rectangle carries non-negative mass.
inline LosupResult losup_cdf_grid(const std::vector<double>& xs, const std::vector<double>& ys,
                                  const std::vector<std::vector<std::vector<double>>>& fs) {
  std::size_t nx = xs.size(), ny = ys.size();
  std::vector<std::vector<double>> F(nx, std::vector<double>(ny));
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      double m = fs[0][i][j];
      for (std::size_t k = 1; k < fs.size(); ++k) m = std::min(m, fs[k][i][j]);
      F[i][j] = m;
    }
  LosupResult out;
  for (std::size_t i = 0; i + 1 < nx; ++i)
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      double mass = F[i + 1][j + 1] - F[i][j + 1] - F[i + 1][j] + F[i][j];
      if (mass < -kGridTol) {
        out.valid = false;
        out.witness = WitnessRect{xs[i], xs[i + 1], ys[j], ys[j + 1], mass};
        return out;
      }
    }
  out.valid = true;
  return out;
}

inline LosupResult losup_couplings(const std::vector<LevelCoupling>& Ls) {
  if (Ls.empty()) throw BadSpec("losup of an empty family");
  for (auto& L : Ls)
    if (!L.kernel.doubly_stochastic(1e-9))
      throw MarginalMismatch("losup inputs must couple lambda with lambda");

  // An input dominating all others is the supremum itself (exact path).
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    bool top = true;
    for (std::size_t j = 0; j < Ls.size() && top; ++j)
      top = lo_leq(Ls[j], Ls[i]);
    if (top) {
      LosupResult out;
      out.valid = true;
      out.coupling = Ls[i];
      return out;
    }
  }

  std::vector<double> g{0.0, 1.0};
  std::vector<CouplingEval> evals;
  evals.reserve(Ls.size());
  for (auto& L : Ls) {
    CouplingEval e(L.kernel);
    g = merge_grids(g, e.axis());
    evals.push_back(std::move(e));
  }
  std::vector<std::vector<std::vector<double>>> fs;
  for (auto& e : evals) fs.push_back(e.corners(g));
  LosupResult out = losup_cdf_grid(g, g, fs);
  if (!out.valid) return out;

  // Rebuild the candidate from its grid cell masses: one target row per
  // source cell, deduplicated by canonicalization.
  std::size_t n = g.size();
  std::vector<std::vector<double>> F(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double m = fs[0][i][j];
      for (std::size_t k = 1; k < fs.size(); ++k) m = std::min(m, fs[k][i][j]);
      F[i][j] = m;
    }
  std::vector<double> grid = g;
  std::vector<double> ident(n - 1, 0.0);
  std::vector<std::vector<double>> coef;
  std::vector<LevelDensity> targets;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double w = g[i + 1] - g[i];
    std::vector<double> dens(n - 1, 0.0);
    for (std::size_t j = 0; j + 1 < n; ++j) {
      double mass = F[i + 1][j + 1] - F[i][j + 1] - F[i + 1][j] + F[i][j];
      double cw = g[j + 1] - g[j];
      dens[j] = (w > 0 && cw > 0) ? std::max(0.0, mass) / (w * cw) : 0.0;
    }
    LevelDensity row(g, dens);
    double m = row.mass();
    if (m <= kGridTol || w <= kGridTol) {
      ident[i] = 1.0;  // degenerate cell
      continue;
    }
    targets.push_back(row.scaled(1.0 / m));
    coef.push_back(std::vector<double>(n - 1, 0.0));
    coef.back()[i] = m / w;
  }
  LevelKernel hk = LevelKernel::from_parts(std::move(grid), std::move(ident), std::move(coef),
                                           std::move(targets));
  out.coupling = LevelCoupling{std::move(hk)};
  return out;
}

}  // namespace mq
