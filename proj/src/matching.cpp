#include "iaunet/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iaunet {

namespace {
constexpr double kPadSentinel = 1e9;
}

MatchAssignment hungarian(const std::vector<double>& cost, int n, int m) {
  if (n < 1 || m < 1)
    throw ContractError("hungarian: empty cost matrix");
  if (n < m)
    throw ContractError(
        msg("hungarian: needs at least as many predictions as ground truths (",
            n, " < ", m, ")"));
  if (static_cast<int>(cost.size()) != n * m)
    throw ContractError("hungarian: matrix size does not match n*m");
  for (double v : cost)
    if (!std::isfinite(v))
      throw NumericError("hungarian: non-finite cost entry");

  // Kuhn-Munkres with potentials on the padded square (columns m..n-1 are
  // sentinel slots that absorb unmatched predictions).
  const int size = n;
  auto cost_at = [&](int row, int col) -> double {
    return col < m ? cost[static_cast<std::size_t>(row) * m + col]
                   : kPadSentinel;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(size + 1, 0.0), v(size + 1, 0.0);
  std::vector<int> match_col(size + 1, 0);  // column -> row (1-based)
  std::vector<int> way(size + 1, 0);
  for (int i = 1; i <= size; ++i) {
    match_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(size + 1, inf);
    std::vector<char> used(size + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match_col[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= size; ++j) {
        if (used[j]) continue;
        const double cur = cost_at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= size; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const int j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0);
  }

  MatchAssignment out;
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= size; ++j)
    if (match_col[j] > 0 && j - 1 < m) row_to_col[match_col[j] - 1] = j - 1;
  for (int r = 0; r < n; ++r) {
    if (row_to_col[r] >= 0)
      out.pairs.emplace_back(r, row_to_col[r]);
    else
      out.unmatched_predictions.push_back(r);
  }
  return out;
}

}  // namespace iaunet
