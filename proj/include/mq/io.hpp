#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mq/action.hpp"
#include "mq/common.hpp"
#include "mq/family.hpp"
#include "mq/kernel.hpp"
#include "mq/levels.hpp"
#include "mq/process.hpp"

namespace mq {

using json = nlohmann::ordered_json;

// All numeric output uses 17 significant digits.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct FamilySpec {
  FamilyPtr family;
  std::uint64_t seed = 1;
  RefineOptions refine;
  double comparison_tol = kOrderTol;
};

inline PiecewiseLinear parse_pwlinear(const json& j) {
  std::vector<std::pair<double, double>> nodes;
  for (auto& n : j) nodes.push_back({n.at(0).get<double>(), n.at(1).get<double>()});
  return PiecewiseLinear(std::move(nodes));
}

inline RealMeasure parse_measure(const json& j) {
  std::vector<std::pair<double, double>> atoms;
  std::vector<std::array<double, 3>> segments;
  if (j.contains("atoms"))
    for (auto& a : j["atoms"]) atoms.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
  if (j.contains("segments"))
    for (auto& s : j["segments"])
      segments.push_back(
          {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
  if (atoms.empty() && segments.empty()) throw BadSpec("measure literal is empty");
  return measure_from_mixture(atoms, segments);
}

inline json measure_to_json(const RealMeasure& m) {
  json atoms = json::array(), segments = json::array();
  double cursor = 0;
  for (std::size_t k = 0; k < m.piece_count(); ++k) {
    double w = m.level_breaks()[k + 1] - m.level_breaks()[k];
    if (auto* a = std::get_if<Atom>(&m.piece(k)))
      atoms.push_back({a->x, w});
    else {
      auto& s = std::get<Segment>(m.piece(k));
      segments.push_back({s.lo, s.hi, w});
    }
    cursor += w;
  }
  return json{{"atoms", atoms}, {"segments", segments}};
}

inline FamilyPtr parse_family(const json& j) {
  if (j.contains("explicit")) {
    auto& e = j["explicit"];
    std::vector<std::pair<double, RealMeasure>> times;
    for (auto& entry : e.at("times"))
      times.push_back({entry.at(0).get<double>(), parse_measure(entry.at(1))});
    bool complete = e.value("atomic_complete", true);
    return std::make_shared<ExplicitFamily>(std::move(times), complete);
  }
  if (j.contains("parametric")) {
    auto& p = j["parametric"];
    std::string name = p.at("name").get<std::string>();
    json params = p.value("params", json::object());
    if (name == "poisson")
      return std::make_shared<PoissonFamily>(params.value("tmax", 1.0),
                                             params.value("cap", 40));
    if (name == "binomial") return std::make_shared<BinomialFamily>(params.at("n").get<int>());
    if (name == "two_atom") return std::make_shared<TwoAtomFamily>(parse_pwlinear(params.at("a")));
    if (name == "dirac_path")
      return std::make_shared<DiracPathFamily>(parse_pwlinear(params.at("g")));
    if (name == "crossing_uniforms") return std::make_shared<CrossingUniformsFamily>();
    if (name == "atom_over_diffuse") return std::make_shared<AtomOverDiffuseFamily>();
    if (name == "atom_lower_levels")
      return std::make_shared<AtomLowerLevelsFamily>(parse_pwlinear(params.at("B")),
                                                     params.value("diffuse_pieces", 32));
    throw BadSpec("unknown parametric family: " + name);
  }
  throw BadSpec("family must be explicit or parametric");
}

inline FamilySpec parse_family_spec(const json& j) {
  FamilySpec spec;
  spec.family = parse_family(j.at("family"));
  spec.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("tolerances")) {
    auto& t = j["tolerances"];
    spec.refine.tol = t.value("refinement", kRefineTol);
    spec.comparison_tol = t.value("comparison", kOrderTol);
  }
  return spec;
}

inline FamilySpec load_family_spec(const std::string& path) {
  // Builtin shortcut: a bare name selects a parametric family with defaults.
  if (path.find('.') == std::string::npos && path.find('/') == std::string::npos) {
    json j{{"family", {{"parametric", {{"name", path}, {"params", json::object()}}}}}};
    if (path == "binomial") j["family"]["parametric"]["params"]["n"] = 5;
    if (path == "two_atom")
      j["family"]["parametric"]["params"]["a"] = json::array({{0.0, 0.25}, {1.0, 0.75}});
    if (path == "dirac_path")
      j["family"]["parametric"]["params"]["g"] = json::array({{0.0, 0.0}, {1.0, 1.0}});
    if (path == "atom_lower_levels")
      j["family"]["parametric"]["params"]["B"] =
          json::array({{0.0, 0.2}, {0.5, 0.8}, {1.0, 0.2}});
    return parse_family_spec(j);
  }
  std::ifstream in(path);
  if (!in) throw BadSpec("cannot open family spec: " + path);
  json j;
  in >> j;
  return parse_family_spec(j);
}

// Level coupling document: grid, per-cell identity weight and coefficients,
// target densities.
inline json coupling_to_json(const LevelCoupling& L) {
  const auto& k = L.kernel;
  json cells = json::array();
  for (std::size_t c = 0; c + 1 < k.grid().size(); ++c) {
    double mid = 0.5 * (k.grid()[c] + k.grid()[c + 1]);
    json coefs = json::array();
    for (std::size_t j = 0; j < k.target_count(); ++j) coefs.push_back(k.coef_at(j, mid));
    cells.push_back({{"identity", k.ident_at(mid)}, {"coefficients", coefs}});
  }
  json targets = json::array();
  for (std::size_t j = 0; j < k.target_count(); ++j)
    targets.push_back(
        {{"breaks", k.target(j).breaks()}, {"density", k.target(j).values()}});
  return json{{"grid", k.grid()}, {"cells", cells}, {"targets", targets}};
}

// CSV dump of the coupling CDF on a grid: u, v, F per line.
inline std::string cdf_csv(const LevelCoupling& L, const std::vector<double>& us,
                           const std::vector<double>& vs) {
  CouplingEval e(L.kernel);
  std::string out = "u,v,F\n";
  for (double u : us)
    for (double v : vs)
      out += fmt17(u) + "," + fmt17(v) + "," + fmt17(e.cdf(u, v)) + "\n";
  return out;
}

inline std::string paths_csv(const PathEnsemble& e) {
  std::string out;
  for (std::size_t i = 0; i < e.grid.size(); ++i)
    out += (i ? "," : "") + ("t_" + fmt17(e.grid[i]));
  out += "\n";
  for (std::size_t p = 0; p < e.path_count(); ++p) {
    for (std::size_t i = 0; i < e.grid.size(); ++i)
      out += (i ? "," : "") + fmt17(e.at(p, i));
    out += "\n";
  }
  return out;
}

inline json energy_report_json(const Partition& R, const MarginalFamily& family) {
  json terms = json::array();
  double total = 0;
  RealMeasure prev = family.measure_at(R.points.front());
  for (std::size_t i = 0; i + 1 < R.points.size(); ++i) {
    RealMeasure next = family.measure_at(R.points[i + 1]);
    double d = w2(prev, next);
    double term = d * d / (R.points[i + 1] - R.points[i]);
    terms.push_back(term);
    total += term;
    prev = std::move(next);
  }
  return json{{"partition", R.points}, {"terms", terms}, {"total", total}};
}

}  // namespace mq
