#pragma once

#include <utility>
#include <vector>

#include "mq/common.hpp"

namespace mq {

// Piecewise-linear scalar function of time, given by (t, value) nodes with
// non-decreasing t. A repeated abscissa encodes a jump; evaluation is
// right-continuous at jumps and clamps outside the node range.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<std::pair<double, double>> nodes)
      : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw BadSpec("piecewise-linear function needs at least one node");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      if (nodes_[i].first < nodes_[i - 1].first)
        throw BadSpec("piecewise-linear abscissae must be non-decreasing");
  }

  double operator()(double t) const {
    if (t <= nodes_.front().first) return nodes_.front().second;
    if (t >= nodes_.back().first) return nodes_.back().second;
    std::size_t i = 1;
    while (nodes_[i].first <= t) ++i;  // right-continuous at jumps
    double t0 = nodes_[i - 1].first, t1 = nodes_[i].first;
    double v0 = nodes_[i - 1].second, v1 = nodes_[i].second;
    if (t1 <= t0) return v1;
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
  }

  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (auto& [t, v] : nodes_)
      if (out.empty() || t > out.back()) out.push_back(t);
    return out;
  }

  double front_time() const { return nodes_.front().first; }
  double back_time() const { return nodes_.back().first; }
  const std::vector<std::pair<double, double>>& nodes() const { return nodes_; }

 private:
  std::vector<std::pair<double, double>> nodes_;
};

}  // namespace mq
