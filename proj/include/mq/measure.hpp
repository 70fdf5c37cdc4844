#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "mq/common.hpp"

namespace mq {

// Quantile-function piece on a level interval: either a flat stretch (an atom
// of the measure) or an affine stretch (a uniform segment).
struct Atom {
  double x;
};
struct Segment {
  double lo;
  double hi;
};
using Piece = std::variant<Atom, Segment>;

struct AtomInfo {
  double x;
  double weight;
  double level_lo;  // open interval ]F(x-), F(x)[
  double level_hi;
};

// Probability measure on R encoded by its left-continuous quantile function,
// piecewise constant or affine on 0 = u_0 < u_1 < ... < u_K = 1.
class RealMeasure {
 public:
  // pieces: (level mass, content) in quantile order. Masses must be positive
  // and sum to 1 within 1e-12; the sum is then renormalized to exactly 1.
  static RealMeasure from_pieces(const std::vector<std::pair<double, Piece>>& pieces) {
    if (pieces.empty()) throw BadMass("no pieces");
    double total = 0;
    for (auto& [w, p] : pieces) {
      if (!(w > 0)) throw BadMass("piece masses must be positive");
      total += w;
    }
    if (std::fabs(total - 1.0) > 1e-12) throw BadMass("piece masses must sum to 1");

    double prev_end = -std::numeric_limits<double>::infinity();
    for (auto& [w, p] : pieces) {
      double lo, hi;
      if (auto* a = std::get_if<Atom>(&p)) {
        lo = hi = a->x;
      } else {
        auto& s = std::get<Segment>(p);
        lo = s.lo;
        hi = s.hi;
        if (hi < lo - kGridTol) throw NonMonotone("segment with hi < lo");
      }
      if (lo < prev_end - kGridTol) throw NonMonotone("piece values decrease");
      prev_end = std::max(prev_end, hi);
    }

    RealMeasure m;
    m.breaks_.push_back(0.0);
    double acc = 0;
    for (auto& [w, p] : pieces) {
      acc += w;
      m.breaks_.push_back(acc / total);
      m.pieces_.push_back(p);
    }
    m.breaks_.back() = 1.0;
    m.canonicalize();
    return m;
  }

  static RealMeasure dirac(double x) { return from_pieces({{1.0, Atom{x}}}); }
  static RealMeasure uniform(double lo, double hi) {
    return from_pieces({{1.0, Segment{lo, hi}}});
  }

  std::size_t piece_count() const { return pieces_.size(); }
  const std::vector<double>& level_breaks() const { return breaks_; }
  const Piece& piece(std::size_t k) const { return pieces_[k]; }

  // Left-continuous generalized inverse of the CDF; quantile(1) is the
  // essential supremum.
  double quantile(double q) const {
    if (!(q > 0.0) || q > 1.0) throw OutOfRange("quantile level must lie in (0,1]");
    std::size_t k = piece_index_left(q);
    return piece_value_at(k, q);
  }

  // Right limit G(q+) for q in [0,1).
  double quantile_right(double q) const {
    if (q < 0.0 || q >= 1.0) throw OutOfRange("quantile_right level must lie in [0,1)");
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), q);
    std::size_t k = static_cast<std::size_t>(it - breaks_.begin()) - 1;
    if (k >= pieces_.size()) k = pieces_.size() - 1;
    return piece_start_value(k, q);
  }

  // Right-continuous CDF: F(x) = lambda{u : G(u) <= x}.
  double cdf(double x) const { return cdf_impl(x, /*strict=*/false); }
  // Left limit F(x-).
  double cdf_left(double x) const { return cdf_impl(x, /*strict=*/true); }

  std::vector<AtomInfo> atoms() const {
    std::vector<AtomInfo> out;
    for (std::size_t k = 0; k < pieces_.size(); ++k)
      if (auto* a = std::get_if<Atom>(&pieces_[k]))
        out.push_back({a->x, breaks_[k + 1] - breaks_[k], breaks_[k], breaks_[k + 1]});
    return out;
  }

  double min() const { return piece_start_limit(0); }
  double max() const { return piece_end_value(pieces_.size() - 1); }

  // Exact sup |F_mu - F_nu| (both CDFs piecewise affine; kinks at the values
  // taken on the merged level grid).
  double cdf_sup_distance(const RealMeasure& o) const {
    double sup = 0;
    auto scan = [&](const RealMeasure& m) {
      for (std::size_t k = 0; k < m.pieces_.size(); ++k) {
        for (double x : {m.piece_start_limit(k), m.piece_end_value(k)}) {
          sup = std::max(sup, std::fabs(cdf(x) - o.cdf(x)));
          sup = std::max(sup, std::fabs(cdf_left(x) - o.cdf_left(x)));
        }
      }
    };
    scan(*this);
    scan(o);
    return sup;
  }

  friend bool sto_leq(const RealMeasure& a, const RealMeasure& b, double tol);
  friend RealMeasure sto_envelope(const std::vector<RealMeasure>& ms, bool upper);
  friend double w2(const RealMeasure& a, const RealMeasure& b);

 private:
  // Value of G at the *start* of piece k (right limit at breaks_[k]) when
  // q == breaks_[k]; otherwise the interior evaluation.
  double piece_start_value(std::size_t k, double q) const {
    if (auto* a = std::get_if<Atom>(&pieces_[k])) return a->x;
    auto& s = std::get<Segment>(pieces_[k]);
    double a0 = breaks_[k], a1 = breaks_[k + 1];
    if (q <= a0) return s.lo;
    return s.lo + (s.hi - s.lo) * (q - a0) / (a1 - a0);
  }

  double piece_value_at(std::size_t k, double q) const {
    if (auto* a = std::get_if<Atom>(&pieces_[k])) return a->x;
    auto& s = std::get<Segment>(pieces_[k]);
    double a0 = breaks_[k], a1 = breaks_[k + 1];
    return s.lo + (s.hi - s.lo) * (q - a0) / (a1 - a0);
  }

  double piece_start_limit(std::size_t k) const {
    if (auto* a = std::get_if<Atom>(&pieces_[k])) return a->x;
    return std::get<Segment>(pieces_[k]).lo;
  }
  double piece_end_value(std::size_t k) const {
    if (auto* a = std::get_if<Atom>(&pieces_[k])) return a->x;
    return std::get<Segment>(pieces_[k]).hi;
  }

  // Piece whose half-open level interval (u_k, u_{k+1}] contains q.
  std::size_t piece_index_left(double q) const {
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), q);
    std::size_t k = static_cast<std::size_t>(it - breaks_.begin());
    if (k > 0) --k;
    if (k >= pieces_.size()) k = pieces_.size() - 1;
    return k;
  }

  double cdf_impl(double x, bool strict) const {
    double acc = 0;
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      double w = breaks_[k + 1] - breaks_[k];
      if (auto* a = std::get_if<Atom>(&pieces_[k])) {
        if (strict ? a->x < x : a->x <= x) acc += w;
      } else {
        auto& s = std::get<Segment>(pieces_[k]);
        if (x >= s.hi)
          acc += w;
        else if (x > s.lo)
          acc += w * (x - s.lo) / (s.hi - s.lo);
      }
    }
    return acc;
  }

  void canonicalize() {
    // Degenerate segments become atoms; slivers narrower than the grid
    // tolerance are dropped and the mass renormalized.
    std::vector<double> nb{0.0};
    std::vector<Piece> np;
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      double w = breaks_[k + 1] - breaks_[k];
      if (w <= kGridTol) continue;
      Piece p = pieces_[k];
      if (auto* s = std::get_if<Segment>(&p))
        if (s->hi - s->lo <= kGridTol) p = Atom{0.5 * (s->lo + s->hi)};
      if (!np.empty()) {
        if (auto* prev = std::get_if<Atom>(&np.back())) {
          if (auto* cur = std::get_if<Atom>(&p); cur && near(prev->x, cur->x)) {
            nb.back() += w;
            continue;
          }
        } else {
          auto& ps = std::get<Segment>(np.back());
          if (auto* cs = std::get_if<Segment>(&p)) {
            double wp = nb.back() - nb[nb.size() - 2];
            double s1 = (ps.hi - ps.lo) / wp, s2 = (cs->hi - cs->lo) / w;
            if (near(ps.hi, cs->lo, kGridTol * (1 + std::fabs(ps.hi))) &&
                near(s1, s2, kGridTol * (1 + std::fabs(s1)))) {
              ps.hi = cs->hi;
              nb.back() += w;
              continue;
            }
          }
        }
      }
      np.push_back(p);
      nb.push_back(nb.back() + w);
    }
    if (np.empty()) throw BadMass("measure collapsed to zero mass");
    double total = nb.back();
    for (auto& b : nb) b /= total;
    nb.back() = 1.0;
    breaks_ = std::move(nb);
    pieces_ = std::move(np);
  }

  std::vector<double> breaks_;
  std::vector<Piece> pieces_;
};

inline RealMeasure make_measure(const std::vector<std::pair<double, Piece>>& pieces) {
  return RealMeasure::from_pieces(pieces);
}

// Finite mixture of point masses and uniform segments, converted to quantile
// form by exact CDF inversion. Overlapping supports are allowed.
inline RealMeasure measure_from_mixture(const std::vector<std::pair<double, double>>& atoms,
                                        const std::vector<std::array<double, 3>>& segments) {
  std::vector<double> cuts;
  for (auto& [x, w] : atoms) {
    if (!(w > 0)) throw BadMass("atom weights must be positive");
    cuts.push_back(x);
  }
  for (auto& s : segments) {
    if (!(s[2] > 0)) throw BadMass("segment weights must be positive");
    if (!(s[1] > s[0])) throw BadSpec("segment needs hi > lo");
    cuts.push_back(s[0]);
    cuts.push_back(s[1]);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return near(a, b, kGridTol); }),
             cuts.end());

  std::vector<std::pair<double, Piece>> pieces;
  for (std::size_t i = 0; i + 1 <= cuts.size(); ++i) {
    double x = cuts[i];
    double wa = 0;
    for (auto& [ax, aw] : atoms)
      if (near(ax, x, kGridTol)) wa += aw;
    if (wa > 0) pieces.push_back({wa, Atom{x}});
    if (i + 1 == cuts.size()) break;
    double x1 = cuts[i + 1];
    double slope = 0;
    for (auto& s : segments)
      if (s[0] <= x + kGridTol && x1 <= s[1] + kGridTol) slope += s[2] / (s[1] - s[0]);
    if (slope > 0) pieces.push_back({slope * (x1 - x), Segment{x, x1}});
  }
  double total = 0;
  for (auto& [w, p] : pieces) total += w;
  if (std::fabs(total - 1.0) > 1e-9) throw BadMass("mixture mass must be 1");
  for (auto& [w, p] : pieces) w /= total;
  return RealMeasure::from_pieces(pieces);
}

// mu <=_sto nu iff G_mu <= G_nu on (0,1], checked at merged breakpoints.
inline bool sto_leq(const RealMeasure& a, const RealMeasure& b, double tol = kOrderTol) {
  std::vector<double> grid = a.breaks_;
  grid.insert(grid.end(), b.breaks_.begin(), b.breaks_.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (a.quantile_right(grid[i]) > b.quantile_right(grid[i]) + tol) return false;
    if (a.quantile(grid[i + 1]) > b.quantile(grid[i + 1]) + tol) return false;
  }
  return true;
}

// Pointwise quantile envelope: upper gives stosup (CDF = min of CDFs),
// lower gives stoinf.
inline RealMeasure sto_envelope(const std::vector<RealMeasure>& ms, bool upper) {
  if (ms.empty()) throw BadSpec("envelope of an empty set");
  if (ms.size() == 1) return ms[0];
  std::vector<double> grid;
  for (auto& m : ms) grid.insert(grid.end(), m.breaks_.begin(), m.breaks_.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return near(a, b); }),
             grid.end());
  grid.front() = 0.0;
  grid.back() = 1.0;

  std::vector<std::pair<double, Piece>> pieces;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double a0 = grid[i], a1 = grid[i + 1];
    // Each G is affine on (a0, a1]; the envelope switches at pairwise
    // crossings, so subdivide there and pick the winner per sub-cell.
    std::vector<double> sub{a0, a1};
    std::vector<std::pair<double, double>> lin;  // value at a0+, value at a1
    for (auto& m : ms) lin.push_back({m.quantile_right(a0), m.quantile(a1)});
    for (std::size_t p = 0; p < lin.size(); ++p)
      for (std::size_t q = p + 1; q < lin.size(); ++q) {
        double d0 = lin[p].first - lin[q].first, d1 = lin[p].second - lin[q].second;
        if ((d0 < 0) != (d1 < 0) && std::fabs(d1 - d0) > 0) {
          double s = d0 / (d0 - d1);
          double t = a0 + s * (a1 - a0);
          if (t > a0 + kGridTol && t < a1 - kGridTol) sub.push_back(t);
        }
      }
    std::sort(sub.begin(), sub.end());
    for (std::size_t j = 0; j + 1 < sub.size(); ++j) {
      double b0 = sub[j], b1 = sub[j + 1];
      if (b1 - b0 <= kGridTol) continue;
      double mid = 0.5 * (b0 + b1);
      double best = 0;
      bool first = true;
      std::size_t win = 0;
      for (std::size_t p = 0; p < lin.size(); ++p) {
        double v = lin[p].first +
                   (lin[p].second - lin[p].first) * (mid - a0) / (a1 - a0);
        if (first || (upper ? v > best : v < best)) {
          best = v;
          win = p;
          first = false;
        }
      }
      double v0 = lin[win].first + (lin[win].second - lin[win].first) * (b0 - a0) / (a1 - a0);
      double v1 = lin[win].first + (lin[win].second - lin[win].first) * (b1 - a0) / (a1 - a0);
      if (near(v0, v1, kGridTol * (1 + std::fabs(v0))))
        pieces.push_back({b1 - b0, Atom{0.5 * (v0 + v1)}});
      else
        pieces.push_back({b1 - b0, Segment{v0, v1}});
    }
  }
  return RealMeasure::from_pieces(pieces);
}

inline RealMeasure stosup(const std::vector<RealMeasure>& ms) { return sto_envelope(ms, true); }
inline RealMeasure stoinf(const std::vector<RealMeasure>& ms) { return sto_envelope(ms, false); }

// W2 distance via the closed-form quantile integral: per merged level cell the
// quantile difference is affine, so each term is an exact cubic evaluation.
inline double w2(const RealMeasure& a, const RealMeasure& b) {
  std::vector<double> grid = a.breaks_;
  grid.insert(grid.end(), b.breaks_.begin(), b.breaks_.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double acc = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double w = grid[i + 1] - grid[i];
    if (w <= 0) continue;
    double d0 = a.quantile_right(grid[i]) - b.quantile_right(grid[i]);
    double d1 = a.quantile(grid[i + 1]) - b.quantile(grid[i + 1]);
    acc += w * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
  }
  return std::sqrt(std::max(0.0, acc));
}

}  // namespace mq
