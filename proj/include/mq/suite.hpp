#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mq/action.hpp"
#include "mq/common.hpp"
#include "mq/family.hpp"
#include "mq/kernel.hpp"
#include "mq/levels.hpp"
#include "mq/oracle.hpp"
#include "mq/process.hpp"
#include "mq/real_coupling.hpp"
#include "mq/rng.hpp"

namespace mq {

struct PropertyResult {
  std::string name;
  bool pass;
  std::string detail;
};

// Number of properties the suite must report; `check` fails if the list ever
// shrinks below this.
inline constexpr std::size_t kInvariantManifest = 26;

namespace suite_detail {

inline AtomicLevelSet random_set(CounterRng& rng) {
  int m = 1 + static_cast<int>(rng.next_u64() % 3u);
  std::vector<int> cuts;
  for (int i = 0; i < 2 * m; ++i) cuts.push_back(static_cast<int>(rng.next_u64() % 65));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  AtomicLevelSet A;
  for (std::size_t i = 0; i + 1 < cuts.size(); i += 2)
    A.intervals.push_back({cuts[i] / 64.0, cuts[i + 1] / 64.0});
  return A;
}

inline LevelKernel random_kernel(CounterRng& rng) {
  LevelKernel k = LevelKernel::averaging(random_set(rng));
  for (int d = 0; d < 2; ++d) {
    double roll = rng.next_double();
    if (roll < 0.4)
      k = compose(k, LevelKernel::averaging(random_set(rng)));
    else if (roll < 0.6)
      k = mix(k, LevelKernel::identity(), 0.25 + 0.5 * rng.next_double());
    else if (roll < 0.8)
      k = mix(k, LevelKernel::full_average(), 0.25 + 0.5 * rng.next_double());
  }
  return k;
}

inline LevelDensity random_decreasing(CounterRng& rng) {
  std::vector<int> cuts{0, 64};
  for (int i = 0; i < 3; ++i) cuts.push_back(1 + static_cast<int>(rng.next_u64() % 63));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> b, raw;
  for (int c : cuts) b.push_back(c / 64.0);
  double level = 1.0 + rng.next_double();
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    raw.push_back(level);
    level *= 0.2 + 0.75 * rng.next_double();
  }
  double mass = 0;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) mass += raw[i] * (b[i + 1] - b[i]);
  for (auto& r : raw) r /= mass;
  return LevelDensity(b, raw);
}

// Representative times inside the family domain (declared times when the
// family is explicit, otherwise an evenly spaced scan).
inline std::vector<double> probe_times(const MarginalFamily& family) {
  if (auto* ex = dynamic_cast<const ExplicitFamily*>(&family)) {
    std::vector<double> out;
    for (auto& [t, m] : ex->declared()) out.push_back(t);
    return out;
  }
  auto [a, b] = family.domain();
  std::vector<double> out;
  for (int i = 0; i <= 6; ++i) out.push_back(a + (b - a) * (i + 0.25) / 6.5);
  return out;
}

}  // namespace suite_detail

inline std::vector<PropertyResult> run_invariant_suite(FamilyPtr family,
                                                       const RefineOptions& refine,
                                                       std::uint64_t seed) {
  using namespace suite_detail;
  std::vector<PropertyResult> out;
  auto add = [&](const std::string& name, std::function<bool(std::string&)> body) {
    PropertyResult r{name, false, ""};
    try {
      r.pass = body(r.detail);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    out.push_back(std::move(r));
  };

  std::vector<double> times = probe_times(*family);
  std::vector<RealMeasure> margs;
  for (double t : times) margs.push_back(family->measure_at(t));
  double lo_tol = std::max(kOrderTol, 3 * refine.tol);

  // ---- measure ----
  add("measure.quantile_cdf_section", [&](std::string&) {
    CounterRng rng(seed, 1);
    for (auto& m : margs)
      for (int s = 0; s < 40; ++s) {
        double u = rng.next_level();
        double x = m.quantile(u);
        if (m.cdf(x) < u - 1e-12) return false;
        if (m.quantile(m.cdf(x)) > x + 1e-12) return false;
      }
    return true;
  });
  add("measure.pushforward_dkw", [&](std::string&) {
    CounterRng rng(seed, 2);
    const int n = 20000;
    double eps = std::sqrt(std::log(2.0 / 0.001) / (2.0 * n));
    for (auto& m : margs) {
      std::vector<double> xs(n);
      for (int i = 0; i < n; ++i) xs[i] = m.quantile(rng.next_level());
      std::sort(xs.begin(), xs.end());
      for (int i = 0; i < n;) {
        int j = i;
        while (j < n && xs[j] == xs[i]) ++j;
        double f = m.cdf(xs[i]);
        if (f - double(j) / n > eps || double(i) / n - f > eps) return false;
        i = j;
      }
    }
    return true;
  });
  add("measure.sto_partial_order", [&](std::string&) {
    for (auto& a : margs) {
      if (!sto_leq(a, a)) return false;
      for (auto& b : margs)
        for (auto& c : margs) {
          if (sto_leq(a, b) && sto_leq(b, a) && a.cdf_sup_distance(b) > 1e-9) return false;
          if (sto_leq(a, b) && sto_leq(b, c) && !sto_leq(a, c)) return false;
        }
    }
    return true;
  });
  add("measure.stosup_least_upper_bound", [&](std::string&) {
    if (margs.size() < 2) return true;
    for (std::size_t i = 0; i + 1 < margs.size(); ++i) {
      auto s = stosup({margs[i], margs[i + 1]});
      if (!sto_leq(margs[i], s) || !sto_leq(margs[i + 1], s)) return false;
      auto upper = stosup({margs[i], margs[i + 1], s});
      if (!sto_leq(s, upper)) return false;
    }
    return true;
  });
  add("measure.w2_metric", [&](std::string&) {
    for (auto& a : margs)
      for (auto& b : margs) {
        if (std::fabs(w2(a, b) - w2(b, a)) > 1e-12) return false;
        for (auto& c : margs)
          if (w2(a, c) > w2(a, b) + w2(b, c) + 1e-12) return false;
      }
    return true;
  });
  add("measure.atom_partition", [&](std::string&) {
    for (auto& m : margs) {
      double prev = 0, atom_mass = 0;
      for (auto& a : m.atoms()) {
        if (a.level_lo < prev - 1e-15) return false;
        if (std::fabs(a.weight - (a.level_hi - a.level_lo)) > 1e-13) return false;
        atom_mass += a.weight;
        prev = a.level_hi;
      }
      if (atom_mass > 1 + 1e-12) return false;
    }
    return true;
  });

  // ---- kernel algebra ----
  add("kernel.canonical_idempotent", [&](std::string&) {
    CounterRng rng(seed, 3);
    for (int it = 0; it < 25; ++it) {
      auto k = compose(random_kernel(rng), random_kernel(rng));
      auto k2 = k;
      k2.canonicalize();
      if (rho(LevelCoupling{k}, LevelCoupling{k2}) > 1e-12) return false;
    }
    return true;
  });
  add("kernel.lambda_stationarity_composes", [&](std::string&) {
    CounterRng rng(seed, 4);
    for (int it = 0; it < 25; ++it)
      if (!compose(random_kernel(rng), random_kernel(rng)).doubly_stochastic(1e-12))
        return false;
    return true;
  });
  add("kernel.increasing_closed_under_composition", [&](std::string&) {
    CounterRng rng(seed, 5);
    for (int it = 0; it < 100; ++it)
      if (!compose(random_kernel(rng), random_kernel(rng)).increasing_kernel()) return false;
    return true;
  });
  add("kernel.increasing_iff_transpose_preserves_decreasing", [&](std::string&) {
    CounterRng rng(seed, 6);
    for (int it = 0; it < 25; ++it) {
      auto k = random_kernel(rng);
      auto kt = k.transpose();
      for (int s = 0; s < 10; ++s)
        if (!kt.apply(random_decreasing(rng)).decreasing(1e-9)) return false;
    }
    return true;
  });
  add("kernel.rho_contraction", [&](std::string&) {
    CounterRng rng(seed, 7);
    for (int it = 0; it < 25; ++it) {
      auto p = LevelCoupling{random_kernel(rng)};
      auto q = LevelCoupling{random_kernel(rng)};
      auto r = random_kernel(rng);
      double base = rho(p, q);
      if (rho(LevelCoupling{compose(p.kernel, r)}, LevelCoupling{compose(q.kernel, r)}) >
          base + 1e-12)
        return false;
      auto rt = r.transpose();
      if (rho(LevelCoupling{compose(rt, p.kernel)}, LevelCoupling{compose(rt, q.kernel)}) >
          base + 1e-12)
        return false;
    }
    return true;
  });
  add("kernel.catenation_continuity", [&](std::string& detail) {
    CounterRng rng(seed, 8);
    auto k = random_kernel(rng);
    auto kp = random_kernel(rng);
    auto lim = compose(k, kp);
    double prev = 2.0;
    for (int n = 1; n <= 10; ++n) {
      double eps = std::pow(0.5, n);
      auto kn = mix(k, LevelKernel::full_average(), 1 - eps);
      auto kpn = mix(kp, LevelKernel::identity(), 1 - eps);
      double d = rho(LevelCoupling{compose(kn, kpn)}, LevelCoupling{lim});
      if (d > prev + 1e-12) return false;
      prev = d;
    }
    detail = "final gap " + std::to_string(prev);
    return prev <= 1e-2;
  });
  add("kernel.quantile_coupling_algebra", [&](std::string&) {
    for (std::size_t i = 0; i + 1 < margs.size(); ++i) {
      // tq_s . q_t is the quantile coupling: Hoeffding-Frechet equality
      auto q = quantile_coupling(margs[i], margs[i + 1]);
      for (double x : {margs[i].min(), 0.5 * (margs[i].min() + margs[i].max())})
        for (double y : {margs[i + 1].min(), margs[i + 1].max()})
          if (std::fabs(q.cdf(x, y) - std::min(margs[i].cdf(x), margs[i + 1].cdf(y))) > 1e-12)
            return false;
      // q_r . tq_r = ell_r, symmetric and idempotent
      auto ell = ell_of(atomic_levels(margs[i]));
      if (rho(LevelCoupling{ell.transpose()}, LevelCoupling{ell}) > 1e-12) return false;
      if (rho(LevelCoupling{compose(ell, ell)}, LevelCoupling{ell}) > 1e-12) return false;
    }
    return true;
  });
  add("kernel.fd_two_times_matches_coupling", [&](std::string&) {
    CounterRng rng(seed, 9);
    for (int it = 0; it < 25; ++it) {
      auto k = random_kernel(rng);
      auto chain = MarkovChainLaw::from_level_kernels({k});
      double u = rng.next_level(), v = rng.next_level();
      if (std::fabs(chain.fd_cdf_levels({u, v}) - coupling_cdf(LevelCoupling{k}, u, v)) > 1e-12)
        return false;
    }
    return true;
  });

  // ---- levels ----
  add("levels.averaging_idempotent", [&](std::string&) {
    for (double t : times) {
      auto ell = ell_of(family->atomic_levels_at(t));
      if (rho(LevelCoupling{compose(ell, ell)}, LevelCoupling{ell}) > 1e-12) return false;
    }
    return true;
  });
  add("levels.lambda_invariance", [&](std::string&) {
    LevelKernel k = LevelKernel::identity();
    for (double t : times) k = compose(k, ell_of(family->atomic_levels_at(t)));
    return k.doubly_stochastic(1e-12);
  });
  add("levels.monotone_in_R", [&](std::string&) {
    CounterRng rng(seed, 10);
    for (int it = 0; it < 200; ++it) {
      auto theta = random_decreasing(rng);
      LevelDensity full = theta, part = theta;
      for (double t : times) {
        auto ell = ell_of(family->atomic_levels_at(t));
        full = ell.apply(full);
        if (rng.next_double() < 0.5) part = ell.apply(part);
      }
      if (!part.sto_leq(full, 1e-10)) return false;
      if (!full.decreasing(1e-10)) return false;
      if (!theta.sto_leq(full, 1e-10)) return false;
    }
    return true;
  });
  add("levels.order_bounds", [&](std::string&) {
    LevelKernel sub = LevelKernel::identity(), all = LevelKernel::identity();
    for (std::size_t i = 0; i < times.size(); ++i) {
      all = compose(all, ell_of(family->atomic_levels_at(times[i])));
      if (i % 2 == 0) sub = compose(sub, ell_of(family->atomic_levels_at(times[i])));
    }
    return lo_leq(LevelCoupling{sub}, LevelCoupling{all}, 1e-10) &&
           lo_leq(LevelCoupling{all}, LevelCoupling::product(), 1e-10);
  });
  add("levels.split_composition", [&](std::string&) {
    if (times.size() < 3) return true;
    double s = times.front(), t = times.back();
    double m = times[times.size() / 2];
    RefineOptions forced = refine;
    bool explicit_family = family->atomic_times_in(s, t, true).has_value();
    if (!explicit_family) forced.forced_depth = 7;
    RefineOptions half = forced;
    if (!explicit_family) half.forced_depth = 6;
    auto whole = L_interval(*family, s, t, forced).coupling.kernel;
    auto left = L_interval(*family, s, m, half).coupling.kernel;
    auto right = L_interval(*family, m, t, half).coupling.kernel;
    auto mid = ell_of(family->atomic_levels_at(m));
    return rho(LevelCoupling{whole},
               LevelCoupling{compose(compose(left, mid), right)}) <= 1e-9;
  });

  // ---- markov-quantile ----
  double s0 = times.front(), t0 = times.back();
  double mid_t = times[times.size() / 2];
  if (near(s0, mid_t) || near(mid_t, t0)) mid_t = 0.5 * (s0 + t0);
  auto handle = ProcessHandle::markov_quantile(family, refine);

  add("mq.chapman_kolmogorov", [&](std::string& detail) {
    auto whole = handle.mq_coupling(s0, t0);
    auto split = compose(handle.mq_coupling(s0, mid_t), handle.mq_coupling(mid_t, t0));
    double d = rho(whole, split);
    detail = "rho " + std::to_string(d);
    return d <= lo_tol;
  });
  add("mq.increasing_kernels", [&](std::string&) {
    for (auto [s, t] : {std::pair{s0, mid_t}, {mid_t, t0}, {s0, t0}})
      if (!L_interval(*family, s, t, refine).coupling.kernel.increasing_kernel()) return false;
    return true;
  });
  add("mq.dominates_made_markov", [&](std::string&) {
    CounterRng rng(seed, 11);
    auto L = L_interval(*family, s0, t0, refine).coupling;
    for (int it = 0; it < 5; ++it) {
      std::vector<double> R;
      for (double t : times)
        if (t > s0 && t < t0 && rng.next_double() < 0.6) R.push_back(t);
      if (!lo_leq(L_finite(*family, R), L, lo_tol)) return false;
    }
    return true;
  });
  add("mq.below_product", [&](std::string&) {
    auto L = L_interval(*family, s0, t0, refine).coupling;
    return lo_leq(L, LevelCoupling::product(), lo_tol);
  });
  add("mq.time_reversal", [&](std::string&) {
    auto rev = std::make_shared<ReversedFamily>(family);
    bool explicit_family = family->atomic_times_in(s0, t0, true).has_value();
    RefineOptions opt = refine;
    if (!explicit_family) opt.forced_depth = 6;
    auto L = L_interval(*family, s0, t0, opt).coupling.kernel;
    auto Lr = L_interval(*rev, -t0, -s0, opt).coupling.kernel;
    return rho(LevelCoupling{Lr}, LevelCoupling{L.transpose()}) <= 1e-9;
  });
  add("mq.monotone_marginals_increasing_paths", [&](std::string& detail) {
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < margs.size(); ++i)
      monotone = monotone && sto_leq(margs[i], margs[i + 1]);
    if (!monotone) {
      detail = "family not sto-increasing; vacuous";
      return true;
    }
    for (std::size_t i = 0; i + 1 < margs.size(); ++i)
      if (handle.mq_coupling(times[i], times[i + 1]).increasing_coupling_defect() > lo_tol)
        return false;
    auto e = handle.simulate(times, 500, seed);
    for (std::size_t p = 0; p < e.path_count(); ++p)
      for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (e.at(p, i) > e.at(p, i + 1) + 1e-12) return false;
    return true;
  });
  add("mq.simulation_consistency", [&](std::string& detail) {
    auto e = handle.simulate({s0, t0}, 100000, seed);
    auto c = handle.mq_coupling(s0, t0);
    auto& left = margs.front();
    auto& right = margs.back();
    double worst = 0;
    for (double x :
         {left.min(), 0.5 * (left.min() + left.max()), left.max()})
      for (double y :
           {right.min(), 0.5 * (right.min() + right.max()), right.max()})
        worst = std::max(worst, std::fabs(e.empirical_pair_cdf(0, 1, x, y) - c.cdf(x, y)));
    detail = "max dev " + std::to_string(worst);
    return worst <= 0.01;
  });

  // ---- action ----
  add("action.energy_refinement_monotone", [&](std::string&) {
    auto base = Partition::uniform(s0, t0, 4);
    auto fine = Partition::uniform(s0, t0, 8);
    if (family->atomic_times_in(s0, t0, true).has_value()) {
      // explicit families only carry marginals at declared times
      if (times.size() < 3) return true;
      std::vector<double> coarse{times.front(), times.back()};
      double ec = energy(*family, Partition(coarse));
      double ef = energy(*family, Partition(times));
      return ef >= ec - 1e-12;
    }
    return energy(*family, fine) >= energy(*family, base) - 1e-12;
  });
  add("action.chasles", [&](std::string&) {
    std::vector<double> pts = times;
    if (pts.size() < 3) return true;
    std::size_t cut = pts.size() / 2;
    std::vector<double> left(pts.begin(), pts.begin() + cut + 1);
    std::vector<double> right(pts.begin() + cut, pts.end());
    double whole = energy(*family, Partition(pts));
    double split = energy(*family, Partition(left)) + energy(*family, Partition(right));
    return std::fabs(whole - split) <= 1e-11 * (1 + whole);
  });
  add("action.lower_bound_and_disp", [&](std::string& detail) {
    Partition R(times);
    double base = energy(*family, R);
    auto disp = disp_ensemble(family, R, 20000, seed);
    auto qe = ProcessHandle::quantile(family).simulate(times, 20000, seed + 1);
    double band = 3.5 * (action_std_error(disp) + action_std_error(qe)) + 1e-9;
    detail = "E(mu,R) " + std::to_string(base);
    if (action(disp) < base - band) return false;
    if (action(qe) < base - band) return false;
    return std::fabs(action(disp) - base) <= band;
  });

  if (out.size() != kInvariantManifest)
    throw BadSpec("invariant manifest count mismatch: " + std::to_string(out.size()));
  return out;
}

}  // namespace mq
