#pragma once

#include <utility>
#include <vector>

#include "iaunet/errors.hpp"

namespace iaunet {

struct MatchAssignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)
  std::vector<int> unmatched_predictions;

  double total_cost(const std::vector<double>& cost, int m) const {
    double t = 0.0;
    for (auto [p, g] : pairs) t += cost[static_cast<std::size_t>(p) * m + g];
    return t;
  }
};

// Exact minimum-cost assignment of predictions (rows) to ground truths
// (columns) on a row-major n x m matrix with n >= m; the rectangle is padded
// to a square with a large sentinel. Deterministic for a given matrix.
MatchAssignment hungarian(const std::vector<double>& cost, int n, int m);

}  // namespace iaunet
