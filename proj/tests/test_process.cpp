#include "mq/process.hpp"

#include <cmath>
#include <memory>

#include "catch2/catch_amalgamated.hpp"
#include "mq/rng.hpp"
#include "test_util.hpp"

using namespace mq;
using namespace mqtest;

namespace {

RealMeasure half_half() { return make_measure({{0.5, Atom{0}}, {0.5, Atom{1}}}); }

FamilyPtr flag_family() {
  std::vector<std::pair<double, RealMeasure>> ts;
  ts.push_back({-1.0, half_half()});
  ts.push_back({-0.5, half_half()});
  ts.push_back({0.0, RealMeasure::dirac(0)});
  ts.push_back({0.5, half_half()});
  ts.push_back({1.0, half_half()});
  return std::make_shared<ExplicitFamily>(std::move(ts), true);
}

FamilyPtr translation_family() {
  std::vector<std::pair<double, RealMeasure>> ts;
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
    ts.push_back({t, RealMeasure::uniform(t, t + 1)});
  return std::make_shared<ExplicitFamily>(std::move(ts), true);
}

std::shared_ptr<ExplicitFamily> random_explicit_family(CounterRng& rng, int times = 4) {
  std::vector<std::pair<double, RealMeasure>> ts;
  double t = 0;
  for (int i = 0; i < times; ++i) {
    ts.push_back({t, random_dyadic_measure(rng)});
    t += 0.25 + std::floor(rng.next_double() * 4) / 4.0;
  }
  return std::make_shared<ExplicitFamily>(std::move(ts), true);
}

}  // namespace

TEST_CASE("mq_coupling fixtures") {
  auto flag = flag_family();
  auto p = ProcessHandle::markov_quantile(flag);

  // across the dirac time: product coupling, four masses 1/4
  auto c = p.mq_coupling(-1, 1);
  for (double x : {0.0, 1.0})
    for (double y : {0.0, 1.0})
      REQUIRE(c.point_mass(x, y) == Catch::Approx(0.25).margin(1e-13));

  // no atomicity change: identity coupling of the marginal
  auto c2 = p.mq_coupling(-1, -0.5);
  REQUIRE(c2.point_mass(0, 0) == Catch::Approx(0.5).margin(1e-13));
  REQUIRE(c2.point_mass(1, 0) == Catch::Approx(0.0).margin(1e-13));

  // diffuse translation family: the quantile coupling y = x + 1
  auto tp = ProcessHandle::markov_quantile(translation_family());
  auto c3 = tp.mq_coupling(0, 1);
  for (double x : {0.1, 0.5, 0.9})
    REQUIRE(c3.cdf(x, x + 1) == Catch::Approx(x).margin(1e-13));
  REQUIRE(c3.increasing_coupling_defect() <= 1e-13);
}

TEST_CASE("process_fd_cdf per variant") {
  auto flag = flag_family();
  auto q = ProcessHandle::quantile(flag);
  REQUIRE(q.fd_cdf({-1, 1}, {0, 0}) == Catch::Approx(0.5).margin(1e-14));

  auto m0 = ProcessHandle::made_markov_at(flag, {0.0});
  REQUIRE(m0.fd_cdf({-1, 1}, {0, 0}) == Catch::Approx(0.25).margin(1e-14));

  auto mq = ProcessHandle::markov_quantile(flag);
  auto c = mq.mq_coupling(-1, 1);
  for (double x : {0.0, 1.0})
    for (double y : {0.0, 1.0})
      REQUIRE(mq.fd_cdf({-1, 1}, {x, y}) == Catch::Approx(c.cdf(x, y)).margin(1e-13));

  REQUIRE_THROWS_AS(q.fd_cdf({-1, 1}, {0}), LengthMismatch);
}

TEST_CASE("markov diagnosis") {
  auto flag = flag_family();
  // the quantile process of the flag family is not Markov across 0
  auto q = ProcessHandle::quantile(flag);
  REQUIRE(q.markov_defect({-1, 0, 1}) >= 0.2);
  REQUIRE_FALSE(q.markov_check({-1, 0, 1}));

  // the Markov-quantile process passes its own consistency check
  auto mq = ProcessHandle::markov_quantile(flag);
  REQUIRE(mq.markov_check({-1, 0, 1}, 1e-11));

  // a fully diffuse family's quantile process is Markov
  auto qt = ProcessHandle::quantile(translation_family());
  REQUIRE(qt.markov_check({0, 0.5, 1}, 1e-11));
}

TEST_CASE("chapman-kolmogorov consistency") {
  CounterRng rng(61, 0);
  for (int it = 0; it < 25; ++it) {
    auto fam = random_explicit_family(rng);
    auto p = ProcessHandle::markov_quantile(fam);
    auto& d = fam->declared();
    double s = d.front().first, u = d.back().first;
    double t = d[1 + rng.next_u64() % (d.size() - 2)].first;
    auto whole = p.mq_coupling(s, u);
    auto split = compose(p.mq_coupling(s, t), p.mq_coupling(t, u));
    REQUIRE(rho(whole, split) <= 1e-9);
  }

  // matched-depth check for a parametric fixture (midpoint split is exact)
  auto pois = std::make_shared<PoissonFamily>(1.0);
  RefineOptions full, half;
  full.forced_depth = 7;
  half.forced_depth = 6;
  auto whole = L_interval(*pois, 0.25, 0.75, full).coupling.kernel;
  auto left = L_interval(*pois, 0.25, 0.5, half).coupling.kernel;
  auto right = L_interval(*pois, 0.5, 0.75, half).coupling.kernel;
  auto mid = ell_of(pois->atomic_levels_at(0.5));
  REQUIRE(rho(LevelCoupling{whole}, LevelCoupling{compose(compose(left, mid), right)}) <= 1e-9);
}

TEST_CASE("mq couplings have increasing kernels and sit between Q_[R] and product") {
  CounterRng rng(62, 0);
  for (int it = 0; it < 25; ++it) {
    auto fam = random_explicit_family(rng);
    auto p = ProcessHandle::markov_quantile(fam);
    auto& d = fam->declared();
    double s = d.front().first, t = d.back().first;
    auto L = L_interval(*fam, s, t).coupling;
    REQUIRE(L.kernel.increasing_kernel());

    // Q_[R] for a random subset of interior declared times
    std::vector<double> R;
    for (std::size_t i = 1; i + 1 < d.size(); ++i)
      if (rng.next_double() < 0.5) R.push_back(d[i].first);
    auto LR = L_finite(*fam, R);
    REQUIRE(lo_leq(LR, L, 1e-10));
    REQUIRE(lo_leq(L, LevelCoupling::product(), 1e-10));

    auto qr = pushforward_coupling(fam->measure_at(s), fam->measure_at(t), LR);
    auto mqc = pushforward_coupling(fam->measure_at(s), fam->measure_at(t), L);
    REQUIRE(lo_leq(qr, mqc, 1e-10));
  }
}

TEST_CASE("time reversal transposes the couplings") {
  CounterRng rng(63, 0);
  for (int it = 0; it < 15; ++it) {
    auto fam = random_explicit_family(rng);
    auto rev = std::make_shared<ReversedFamily>(fam);
    auto& d = fam->declared();
    double s = d.front().first, t = d.back().first;
    auto L = L_interval(*fam, s, t).coupling.kernel;
    auto Lr = L_interval(*rev, -t, -s).coupling.kernel;
    REQUIRE(rho(LevelCoupling{Lr}, LevelCoupling{L.transpose()}) <= 1e-10);
  }
}

TEST_CASE("simulation: quantile variant reproduces quantile trajectories") {
  auto tp = ProcessHandle::quantile(translation_family());
  auto e = tp.simulate({0, 0.25, 0.5, 0.75, 1.0}, 3, 7);
  for (std::size_t p = 0; p < 3; ++p) {
    double u = e.at(p, 0);
    for (std::size_t i = 0; i < e.grid.size(); ++i)
      REQUIRE(e.at(p, i) == Catch::Approx(u + e.grid[i]).margin(1e-12));
  }
}

TEST_CASE("simulation is deterministic and thread-count independent") {
  auto flag = flag_family();
  auto p = ProcessHandle::markov_quantile(flag);
  auto a = p.simulate({-1, -0.5, 0, 0.5, 1}, 600, 42);
  auto b = p.simulate({-1, -0.5, 0, 0.5, 1}, 600, 42);
  REQUIRE(a.values == b.values);
  setenv("MQ_THREADS", "3", 1);
  auto c = p.simulate({-1, -0.5, 0, 0.5, 1}, 600, 42);
  setenv("MQ_THREADS", "1", 1);
  auto d = p.simulate({-1, -0.5, 0, 0.5, 1}, 600, 42);
  unsetenv("MQ_THREADS");
  REQUIRE(a.values == c.values);
  REQUIRE(a.values == d.values);
}

TEST_CASE("poisson simulation: marginal means and monotone paths") {
  auto fam = std::make_shared<PoissonFamily>(1.0);
  // marginals are exact at every refinement depth, so a loose transition
  // tolerance is enough for mean and monotonicity checks
  auto p = ProcessHandle::markov_quantile(fam, {1e-3, 20, std::nullopt});
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(i / 50.0);
  auto e = p.simulate(grid, 10000, 123);
  for (double t : {0.2, 0.6, 1.0}) {
    std::size_t i = static_cast<std::size_t>(t * 50);
    double sigma = std::sqrt(t / 10000.0);
    REQUIRE(std::fabs(e.mean_at(i) - t) <= 3.5 * sigma + 1e-9);
  }
  for (std::size_t q = 0; q < e.path_count(); ++q)
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      REQUIRE(e.at(q, i) <= e.at(q, i + 1) + 1e-12);
}

TEST_CASE("monotone marginals give increasing couplings") {
  auto fam = std::make_shared<PoissonFamily>(1.0);
  auto p = ProcessHandle::markov_quantile(fam, {1e-4, 20, std::nullopt});
  for (auto [s, t] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.6}}) {
    REQUIRE(sto_leq(fam->measure_at(s), fam->measure_at(t)));
    REQUIRE(p.mq_coupling(s, t).increasing_coupling_defect() <= 3 * p.options().tol);
  }
}

TEST_CASE("simulation pair law matches the coupling") {
  auto flag = flag_family();
  auto p = ProcessHandle::markov_quantile(flag);
  auto e = p.simulate({-1, 1}, 100000, 99);
  auto c = p.mq_coupling(-1, 1);
  for (double x : {-0.5, 0.0, 0.5, 1.0})
    for (double y : {-0.5, 0.0, 0.5, 1.0})
      REQUIRE(std::fabs(e.empirical_pair_cdf(0, 1, x, y) - c.cdf(x, y)) <= 0.01);
}

TEST_CASE("jump rates") {
  auto pois = std::make_shared<PoissonFamily>(1.0);
  auto pp = ProcessHandle::markov_quantile(pois, {1e-5, 20, std::nullopt});
  for (int k : {0, 1, 3}) {
    auto r = pp.jump_rates(0.5, k, 1e-3);
    REQUIRE(r.up_analytic == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(r.down_analytic == 0.0);
    REQUIRE(r.up_empirical == Catch::Approx(1.0).margin(0.02));
    REQUIRE(r.down_empirical <= 0.01);
  }

  auto bin = std::make_shared<BinomialFamily>(5);
  auto bp = ProcessHandle::markov_quantile(bin, {1e-5, 20, std::nullopt});
  for (int k : {0, 2}) {
    auto r = bp.jump_rates(0.25, k, 1e-3);
    REQUIRE(r.up_analytic == Catch::Approx((5.0 - k) / 0.75).margin(1e-9));
    REQUIRE(r.up_empirical == Catch::Approx((5.0 - k) / 0.75).epsilon(0.02));
  }

  // constant family: both rates vanish
  auto flat = std::make_shared<TwoAtomFamily>(PiecewiseLinear({{0.0, 0.6}, {1.0, 0.6}}));
  auto fp = ProcessHandle::markov_quantile(flat);
  auto r = fp.jump_rates(0.5, 0, 1e-3);
  REQUIRE(std::fabs(r.up_analytic) <= 1e-9);
  REQUIRE(std::fabs(r.up_empirical) <= 1e-9);
  REQUIRE(std::fabs(r.down_empirical) <= 1e-9);

  auto lop = ProcessHandle::markov_quantile(
      std::make_shared<TwoAtomFamily>(PiecewiseLinear({{0.0, 1.0}, {1.0, 1.0}})));
  REQUIRE_THROWS_AS(lop.jump_rates(0.5, 1, 1e-3), ZeroMass);
}
