// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <vector>

#include "core/tensor.hpp"

namespace mtvl::train {

// Minimum-cost assignment of rows (targets) to columns (proposals) for a
// rows x cols cost matrix with rows <= cols. Returns col index per row.
// Jonker-Volgenant style O(rows^2 * cols) shortest augmenting paths.
inline std::vector<int64_t> hungarian(const std::vector<double>& cost, int64_t rows,
                                      int64_t cols) {
  nc::require(rows >= 0 && cols >= 0 && int64_t(cost.size()) == rows * cols,
              "hungarian: cost size mismatch");
  nc::require(rows <= cols, "hungarian: need rows <= cols, got " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  if (rows == 0) return {};
  const double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials over rows (u) and cols (v); way[j] = previous col on
  // the shortest augmenting path, p[j] = row matched to col j
  std::vector<double> u(size_t(rows + 1)), v(size_t(cols + 1));
  std::vector<int64_t> p(size_t(cols + 1), 0), way(size_t(cols + 1), 0);
  for (int64_t i = 1; i <= rows; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv(size_t(cols + 1), kInf);
    std::vector<char> used(size_t(cols + 1), 0);
    do {
      used[size_t(j0)] = 1;
      const int64_t i0 = p[size_t(j0)];
      double delta = kInf;
      int64_t j1 = -1;
      for (int64_t j = 1; j <= cols; ++j) {
        if (used[size_t(j)]) continue;
        const double cur = cost[size_t((i0 - 1) * cols + (j - 1))] - u[size_t(i0)] - v[size_t(j)];
        if (cur < minv[size_t(j)]) {
          minv[size_t(j)] = cur;
          way[size_t(j)] = j0;
        }
        if (minv[size_t(j)] < delta) {
          delta = minv[size_t(j)];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= cols; ++j) {
        if (used[size_t(j)]) {
          u[size_t(p[size_t(j)])] += delta;
          v[size_t(j)] -= delta;
        } else {
          minv[size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[size_t(j0)] != 0);
    do {
      const int64_t j1 = way[size_t(j0)];
      p[size_t(j0)] = p[size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int64_t> row_to_col(size_t(rows), -1);
  for (int64_t j = 1; j <= cols; ++j)
    if (p[size_t(j)] != 0) row_to_col[size_t(p[size_t(j)] - 1)] = j - 1;
  return row_to_col;
}

inline double assignment_cost(const std::vector<double>& cost, int64_t cols,
                              const std::vector<int64_t>& row_to_col) {
  double total = 0.0;
  for (size_t r = 0; r < row_to_col.size(); ++r) total += cost[r * size_t(cols) + size_t(row_to_col[r])];
  return total;
}

}  // namespace mtvl::train
