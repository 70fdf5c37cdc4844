#include "mq/action.hpp"

#include <cmath>
#include <memory>

#include "catch2/catch_amalgamated.hpp"
#include "mq/rng.hpp"
#include "test_util.hpp"

using namespace mq;
using namespace mqtest;

namespace {

FamilyPtr translation_family(int steps = 8) {
  std::vector<std::pair<double, RealMeasure>> ts;
  for (int i = 0; i <= steps; ++i) {
    double t = double(i) / steps;
    ts.push_back({t, RealMeasure::uniform(t, t + 1)});
  }
  return std::make_shared<ExplicitFamily>(std::move(ts), true);
}

FamilyPtr two_atom_path() {
  return std::make_shared<TwoAtomFamily>(PiecewiseLinear({{0.0, 1.0}, {1.0, 0.0}}));
}

}  // namespace

TEST_CASE("energy closed forms") {
  auto trans = translation_family();
  REQUIRE(energy(*trans, Partition::uniform(0, 1, 4)) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(energy(*trans, Partition({0.0, 0.125, 0.75, 1.0})) ==
          Catch::Approx(1.0).margin(1e-12));

  auto flat = std::make_shared<TwoAtomFamily>(PiecewiseLinear({{0.0, 0.3}, {1.0, 0.3}}));
  REQUIRE(energy(*flat, Partition::uniform(0, 1, 8)) == 0.0);

  // (1-t)d_0 + t d_1: W2^2 over a cell equals its width, so E(mu, R) = m+1
  auto jump = two_atom_path();
  for (int m : {1, 3, 7})
    REQUIRE(energy(*jump, Partition::uniform(0, 1, m + 1)) ==
            Catch::Approx(m + 1.0).margin(1e-11));
}

TEST_CASE("energy is monotone under refinement and satisfies Chasles") {
  CounterRng rng(71, 0);
  auto fam = std::make_shared<TwoAtomFamily>(
      PiecewiseLinear({{0.0, 0.3}, {0.4, 0.8}, {0.7, 0.2}, {1.0, 0.6}}));
  for (int it = 0; it < 50; ++it) {
    // random partition and a random refinement of it
    std::vector<double> base{0.0, 1.0};
    for (int i = 0; i < 3; ++i) base.push_back(0.1 + 0.8 * rng.next_double());
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
    std::vector<double> fine = base;
    for (int i = 0; i < 3; ++i) fine.push_back(0.1 + 0.8 * rng.next_double());
    std::sort(fine.begin(), fine.end());
    fine.erase(std::unique(fine.begin(), fine.end()), fine.end());
    double eb = energy(*fam, Partition(base));
    double ef = energy(*fam, Partition(fine));
    REQUIRE(ef >= eb - 1e-12);

    // Chasles over a partition containing an interior point
    auto mid_it = std::find_if(fine.begin(), fine.end(), [](double x) { return x > 0.3; });
    double mid = *mid_it;
    std::vector<double> left(fine.begin(), mid_it + 1), right(mid_it, fine.end());
    if (left.size() < 2 || right.size() < 2) continue;
    REQUIRE(energy(*fam, Partition(fine)) ==
            Catch::Approx(energy(*fam, Partition(left)) + energy(*fam, Partition(right)))
                .margin(1e-12));
  }
}

TEST_CASE("energy_limit fixtures") {
  auto trans = translation_family(16);
  auto r1 = energy_limit(*trans, 0, 1, 1e-9, 1e6, 4);
  REQUIRE_FALSE(r1.infinite);
  REQUIRE(r1.value == Catch::Approx(1.0).margin(1e-9));

  auto jump = two_atom_path();
  auto r2 = energy_limit(*jump, 0, 1, 1e-9);
  REQUIRE(r2.infinite);
  REQUIRE(r2.value > 1e6);

  // dirac path along g(t) = t^2: E = integral of (2t)^2 = 4/3
  auto g = std::make_shared<DiracPathFamily>(PiecewiseLinear([] {
    std::vector<std::pair<double, double>> nodes;
    for (int i = 0; i <= 256; ++i) {
      double t = i / 256.0;
      nodes.push_back({t, t * t});
    }
    return nodes;
  }()));
  double quad = 0;  // independent quadrature oracle
  int n = 100000;
  for (int i = 0; i < n; ++i) {
    double t = (i + 0.5) / n;
    quad += 4 * t * t / n;
  }
  auto r3 = energy_limit(*g, 0, 1, 1e-7);
  REQUIRE_FALSE(r3.infinite);
  REQUIRE(r3.value == Catch::Approx(quad).margin(2e-4));
  REQUIRE(r3.value <= 4.0 / 3 + 1e-12);
}

TEST_CASE("path energy and action basics") {
  std::vector<double> grid{0.0, 0.25, 0.5, 1.0};
  std::vector<double> line{0.0, 0.25, 0.5, 1.0};
  REQUIRE(path_energy(grid, line.data()) == Catch::Approx(1.0).margin(1e-15));

  PathEnsemble flat;
  flat.grid = grid;
  flat.values = {1, 1, 1, 1, 2, 2, 2, 2};
  REQUIRE(action(flat) == 0.0);
}

TEST_CASE("disp ensemble basics") {
  // d_0 -> d_1 over one block: all paths are t -> t
  auto path = std::make_shared<DiracPathFamily>(PiecewiseLinear({{0.0, 0.0}, {1.0, 1.0}}));
  std::vector<double> out_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  auto e = disp_ensemble(path, Partition({0.0, 1.0}), 5, 3, &out_grid);
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t i = 0; i < out_grid.size(); ++i)
      REQUIRE(e.at(p, i) == Catch::Approx(out_grid[i]).margin(1e-12));

  // uniform -> shifted uniform: every path is a unit-speed shift
  auto trans = translation_family(1);
  auto e2 = disp_ensemble(trans, Partition({0.0, 1.0}), 50, 5, &out_grid);
  for (std::size_t p = 0; p < 50; ++p)
    for (std::size_t i = 0; i + 1 < out_grid.size(); ++i)
      REQUIRE(e2.at(p, i + 1) - e2.at(p, i) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("action of a disp ensemble estimates the partition energy") {
  auto fam = std::make_shared<BinomialFamily>(3);
  auto R = Partition::uniform(0, 1, 4);
  auto e = disp_ensemble(fam, R, 20000, 11);
  double target = energy(*fam, R);
  double a = action(e);
  REQUIRE(std::fabs(a - target) <= 3.5 * action_std_error(e) + 1e-9);
}

TEST_CASE("action lower bound: ensembles dominate the grid energy") {
  auto fam = std::make_shared<BinomialFamily>(3);
  auto grid = Partition::uniform(0, 1, 8);
  double base = energy(*fam, grid);
  auto mk = [&](ProcessHandle p) { return p.simulate(grid.points, 20000, 17); };
  for (auto e : {mk(ProcessHandle::quantile(fam)),
                 mk(ProcessHandle::markov_quantile(fam, {1e-4, 20, std::nullopt})),
                 disp_ensemble(fam, grid, 20000, 17)}) {
    REQUIRE(action(e) >= base - 3.5 * action_std_error(e) - 1e-9);
  }
}

TEST_CASE("made-Markov ensembles keep the quantile action on refining grids") {
  auto fam = std::make_shared<BinomialFamily>(3);
  auto grid = Partition::uniform(0, 1, 8);
  auto q = ProcessHandle::quantile(fam).simulate(grid.points, 30000, 23);
  auto m = ProcessHandle::made_markov_at(fam, {0.25, 0.5, 0.75})
               .simulate(grid.points, 30000, 29);
  double band = 3.5 * (action_std_error(q) + action_std_error(m));
  REQUIRE(std::fabs(action(q) - action(m)) <= band);
}

TEST_CASE("coarsening an ensemble lowers its grid energy") {
  auto fam = std::make_shared<BinomialFamily>(3);
  auto e = ProcessHandle::quantile(fam).simulate(Partition::uniform(0, 1, 8).points, 5000, 31);
  auto c = coarsen(e);
  REQUIRE(c.grid.size() == 5);
  REQUIRE(action(c) <= action(e) + 1e-12);
}
