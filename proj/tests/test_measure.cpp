#include "mq/measure.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "mq/rng.hpp"

using namespace mq;

namespace {

RealMeasure two_atoms(double x0, double x1, double w0 = 0.5) {
  return make_measure({{w0, Atom{x0}}, {1 - w0, Atom{x1}}});
}

// Test-local random measure with dyadic breakpoints (denominator <= 64).
RealMeasure random_dyadic_measure(CounterRng& rng, int max_pieces = 4) {
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

}  // namespace

TEST_CASE("make_measure basic forms") {
  auto d0 = RealMeasure::dirac(0.0);
  REQUIRE(d0.piece_count() == 1);
  REQUIRE(d0.quantile(0.5) == 0.0);

  auto half = two_atoms(0, 1);
  REQUIRE(half.piece_count() == 2);
  REQUIRE(half.quantile(0.5) == 0.0);
  REQUIRE(half.quantile(0.75) == 1.0);

  auto u = RealMeasure::uniform(0, 1);
  REQUIRE(u.quantile(0.3) == Catch::Approx(0.3).margin(1e-15));
}

TEST_CASE("make_measure validation") {
  REQUIRE_THROWS_AS(make_measure({{0.5, Atom{0}}, {0.4, Atom{1}}}), BadMass);
  REQUIRE_THROWS_AS(make_measure({{0.5, Atom{1}}, {0.5, Atom{0}}}), NonMonotone);
  REQUIRE_THROWS_AS(make_measure({{1.0, Segment{1, 0}}}), NonMonotone);
  // mass within 1e-12 is renormalized
  auto m = make_measure({{0.5 + 4e-13, Atom{0}}, {0.5, Atom{1}}});
  REQUIRE(m.level_breaks().back() == 1.0);
}

TEST_CASE("canonical form merges adjacent pieces") {
  auto m = make_measure({{0.25, Atom{1}}, {0.25, Atom{1}}, {0.5, Atom{2}}});
  REQUIRE(m.piece_count() == 2);
  auto s = make_measure({{0.5, Segment{0, 0.5}}, {0.5, Segment{0.5, 1}}});
  REQUIRE(s.piece_count() == 1);  // collinear
  auto t = make_measure({{0.5, Segment{0, 0.5}}, {0.5, Segment{0.5, 2}}});
  REQUIRE(t.piece_count() == 2);  // slope break
}

TEST_CASE("quantile and cdf examples") {
  auto half = two_atoms(0, 1);
  REQUIRE(half.cdf(0) == 0.5);
  REQUIRE(half.cdf(-1) == 0.0);
  REQUIRE(half.cdf(1) == 1.0);
  REQUIRE(half.cdf_left(0) == 0.0);
  auto u = RealMeasure::uniform(0, 1);
  REQUIRE(u.cdf(0.3) == Catch::Approx(0.3).margin(1e-15));
  REQUIRE_THROWS_AS(u.quantile(0.0), OutOfRange);
  REQUIRE_THROWS_AS(u.quantile(1.5), OutOfRange);
  REQUIRE(u.quantile(1.0) == 1.0);
}

TEST_CASE("atoms reports maximal constant pieces") {
  auto half = two_atoms(0, 1);
  auto a = half.atoms();
  REQUIRE(a.size() == 2);
  REQUIRE(a[0].x == 0.0);
  REQUIRE(a[0].weight == 0.5);
  REQUIRE(a[0].level_lo == 0.0);
  REQUIRE(a[0].level_hi == 0.5);
  REQUIRE(a[1].level_lo == 0.5);
  REQUIRE(RealMeasure::uniform(0, 1).atoms().empty());
  auto d = RealMeasure::dirac(0).atoms();
  REQUIRE(d.size() == 1);
  REQUIRE(d[0].weight == 1.0);
}

TEST_CASE("atom level intervals partition the atomic level set") {
  CounterRng rng(11, 0);
  for (int it = 0; it < 200; ++it) {
    auto m = random_dyadic_measure(rng);
    double aw = 0, prev = 0;
    for (auto& a : m.atoms()) {
      REQUIRE(a.level_lo >= prev - 1e-15);
      REQUIRE(a.weight == Catch::Approx(a.level_hi - a.level_lo).margin(1e-14));
      aw += a.weight;
      prev = a.level_hi;
    }
    REQUIRE(aw <= 1.0 + 1e-12);
  }
}

TEST_CASE("sto_leq examples and incomparable pair") {
  auto d0 = RealMeasure::dirac(0), d1 = RealMeasure::dirac(1);
  REQUIRE(sto_leq(d0, d1));
  REQUIRE_FALSE(sto_leq(d1, d0));
  auto m = two_atoms(0, 2);
  REQUIRE(sto_leq(m, m));
  auto mid = RealMeasure::dirac(1);
  REQUIRE_FALSE(sto_leq(m, mid));
  REQUIRE_FALSE(sto_leq(mid, m));
}

TEST_CASE("sto_leq is a partial order on random triples") {
  CounterRng rng(12, 0);
  for (int it = 0; it < 100; ++it) {
    auto a = random_dyadic_measure(rng);
    auto b = random_dyadic_measure(rng);
    auto c = random_dyadic_measure(rng);
    REQUIRE(sto_leq(a, a));
    if (sto_leq(a, b) && sto_leq(b, a))
      REQUIRE(a.cdf_sup_distance(b) <= 1e-9);
    if (sto_leq(a, b) && sto_leq(b, c)) REQUIRE(sto_leq(a, c));
  }
}

TEST_CASE("stosup examples") {
  auto m1 = two_atoms(0, 2);
  auto m2 = RealMeasure::dirac(1);
  auto sup = stosup({m1, m2});
  auto expect = two_atoms(1, 2);
  REQUIRE(sup.cdf_sup_distance(expect) <= 1e-12);

  auto single = stosup({m1});
  REQUIRE(single.cdf_sup_distance(m1) == 0.0);

  auto d = stosup({RealMeasure::dirac(0), RealMeasure::dirac(1)});
  REQUIRE(d.cdf_sup_distance(RealMeasure::dirac(1)) == 0.0);
}

TEST_CASE("stosup is the least upper bound") {
  CounterRng rng(13, 0);
  for (int it = 0; it < 100; ++it) {
    auto a = random_dyadic_measure(rng);
    auto b = random_dyadic_measure(rng);
    auto s = stosup({a, b});
    REQUIRE(sto_leq(a, s));
    REQUIRE(sto_leq(b, s));
    // any common upper bound dominates the supremum; build one by shifting
    auto up = stosup({a, b, random_dyadic_measure(rng)});
    REQUIRE(sto_leq(s, up));
    auto inf = stoinf({a, b});
    REQUIRE(sto_leq(inf, a));
    REQUIRE(sto_leq(inf, b));
  }
}

TEST_CASE("w2 closed forms") {
  REQUIRE(w2(RealMeasure::dirac(0), RealMeasure::dirac(1)) == 1.0);
  auto u0 = RealMeasure::uniform(0, 1);
  for (double t : {0.25, 1.0, 3.5}) {
    auto ut = RealMeasure::uniform(t, t + 1);
    REQUIRE(w2(u0, ut) == Catch::Approx(t).margin(1e-14));
  }
  // oracle for the derived value: quadrature of u^2 on (0,1)
  double quad = 0;
  int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = (i + 0.5) / n;
    quad += u * u / n;
  }
  REQUIRE(w2(RealMeasure::dirac(0), u0) == Catch::Approx(std::sqrt(quad)).margin(1e-9));
  REQUIRE(w2(RealMeasure::dirac(0), u0) == Catch::Approx(std::sqrt(1.0 / 3)).margin(1e-14));
}

TEST_CASE("w2 is a metric on random triples") {
  CounterRng rng(14, 0);
  for (int it = 0; it < 200; ++it) {
    auto a = random_dyadic_measure(rng);
    auto b = random_dyadic_measure(rng);
    auto c = random_dyadic_measure(rng);
    REQUIRE(w2(a, a) <= 1e-12);
    REQUIRE(w2(a, b) == Catch::Approx(w2(b, a)).margin(1e-13));
    REQUIRE(w2(a, c) <= w2(a, b) + w2(b, c) + 1e-12);
    if (w2(a, b) <= 1e-13) REQUIRE(a.cdf_sup_distance(b) <= 1e-9);
  }
}

TEST_CASE("quantile after cdf is a section") {
  CounterRng rng(15, 0);
  for (int it = 0; it < 100; ++it) {
    auto m = random_dyadic_measure(rng);
    for (int s = 0; s < 20; ++s) {
      double u = rng.next_level();
      double x = m.quantile(u);
      double q = m.cdf(x);
      REQUIRE(q >= u - 1e-12);
      REQUIRE(m.quantile(q) <= x + 1e-12);
    }
  }
}

TEST_CASE("pushforward of uniform levels matches the cdf (DKW)") {
  CounterRng rng(16, 0);
  auto m = random_dyadic_measure(rng);
  const int n = 20000;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = m.quantile(rng.next_level());
  std::sort(xs.begin(), xs.end());
  // DKW at confidence 0.999: eps = sqrt(log(2/alpha) / (2n))
  double eps = std::sqrt(std::log(2.0 / 0.001) / (2.0 * n));
  double worst = 0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && xs[j] == xs[i]) ++j;  // ties at atoms
    double f = m.cdf(xs[i]);
    worst = std::max({worst, f - double(j) / n, double(i) / n - f});
    i = j;
  }
  REQUIRE(worst <= eps);
}

TEST_CASE("mixture conversion handles overlapping supports") {
  // atom sitting inside a uniform segment
  auto m = measure_from_mixture({{0.0, 0.5}}, {{{-0.5, 0.5, 0.5}}});
  REQUIRE(m.cdf(-0.5) == 0.0);
  REQUIRE(m.cdf_left(0.0) == Catch::Approx(0.25).margin(1e-14));
  REQUIRE(m.cdf(0.0) == Catch::Approx(0.75).margin(1e-14));
  REQUIRE(m.cdf(0.5) == 1.0);
  auto a = m.atoms();
  REQUIRE(a.size() == 1);
  REQUIRE(a[0].level_lo == Catch::Approx(0.25).margin(1e-14));
  REQUIRE(a[0].level_hi == Catch::Approx(0.75).margin(1e-14));
}
