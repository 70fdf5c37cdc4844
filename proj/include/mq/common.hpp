#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mq {

// Representation-level tolerance: breakpoint merging, mass bookkeeping.
inline constexpr double kGridTol = 1e-12;
// Decision-level tolerance: order comparisons and rho thresholds.
inline constexpr double kOrderTol = 1e-9;
// Default stopping tolerance for parametric refinements.
inline constexpr double kRefineTol = 1e-6;

struct NonMonotone : std::runtime_error {
  explicit NonMonotone(const std::string& m) : std::runtime_error("NonMonotone: " + m) {}
};
struct BadMass : std::runtime_error {
  explicit BadMass(const std::string& m) : std::runtime_error("BadMass: " + m) {}
};
struct OutOfRange : std::runtime_error {
  explicit OutOfRange(const std::string& m) : std::runtime_error("OutOfRange: " + m) {}
};
struct NotDoublyStochastic : std::runtime_error {
  explicit NotDoublyStochastic(const std::string& m)
      : std::runtime_error("NotDoublyStochastic: " + m) {}
};
struct MarginalMismatch : std::runtime_error {
  explicit MarginalMismatch(const std::string& m)
      : std::runtime_error("MarginalMismatch: " + m) {}
};
struct LengthMismatch : std::runtime_error {
  explicit LengthMismatch(const std::string& m) : std::runtime_error("LengthMismatch: " + m) {}
};
struct NoConvergence : std::runtime_error {
  double last_gap;
  NoConvergence(const std::string& m, double gap)
      : std::runtime_error("NoConvergence: " + m), last_gap(gap) {}
};
struct ZeroMass : std::runtime_error {
  explicit ZeroMass(const std::string& m) : std::runtime_error("ZeroMass: " + m) {}
};
struct GridMisaligned : std::runtime_error {
  explicit GridMisaligned(const std::string& m) : std::runtime_error("GridMisaligned: " + m) {}
};
struct CapacityError : std::runtime_error {
  explicit CapacityError(const std::string& m) : std::runtime_error("CapacityError: " + m) {}
};
struct MissingMarginal : std::runtime_error {
  explicit MissingMarginal(const std::string& m) : std::runtime_error("MissingMarginal: " + m) {}
};
struct BadSpec : std::runtime_error {
  explicit BadSpec(const std::string& m) : std::runtime_error("BadSpec: " + m) {}
};

inline bool near(double a, double b, double tol = kGridTol) { return std::fabs(a - b) <= tol; }

}  // namespace mq
