// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcbf/common.hpp"

namespace gcbf {

namespace detail {

inline std::int64_t cell_key(const std::array<std::int64_t, 3>& c) {
  constexpr std::int64_t kSpan = 1 << 20;
  return ((c[0] + kSpan) * 2 * kSpan + (c[1] + kSpan)) * 2 * kSpan + (c[2] + kSpan);
}

}  // namespace detail

/// All unordered pairs (i < j) with ||p_i - p_j|| <= radius, via a uniform grid
/// with cell size `radius`. Pairs are sorted lexicographically.
inline std::vector<std::pair<int, int>> neighbor_pairs(const std::vector<Vec>& positions,
                                                       double radius) {
  std::vector<std::pair<int, int>> out;
  const int n = static_cast<int>(positions.size());
  if (n < 2 || radius <= 0) return out;
  const int dim = static_cast<int>(positions[0].size());

  if (n <= 32) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if ((positions[i] - positions[j]).norm() <= radius) out.emplace_back(i, j);
    return out;
  }

  std::unordered_map<std::int64_t, std::vector<int>> grid;
  std::vector<std::array<std::int64_t, 3>> cells(n);
  for (int i = 0; i < n; ++i) {
    std::array<std::int64_t, 3> c{0, 0, 0};
    for (int k = 0; k < dim; ++k)
      c[k] = static_cast<std::int64_t>(std::floor(positions[i](k) / radius));
    cells[i] = c;
    grid[detail::cell_key(c)].push_back(i);
  }
  const int dz = dim == 3 ? 1 : 0;
  for (int i = 0; i < n; ++i) {
    const auto& c = cells[i];
    for (int ox = -1; ox <= 1; ++ox)
      for (int oy = -1; oy <= 1; ++oy)
        for (int oz = -dz; oz <= dz; ++oz) {
          auto it = grid.find(detail::cell_key({c[0] + ox, c[1] + oy, c[2] + oz}));
          if (it == grid.end()) continue;
          for (int j : it->second)
            if (j > i && (positions[i] - positions[j]).norm() <= radius) out.emplace_back(i, j);
        }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Per-node ascending neighbor indices within radius (no self entries).
inline std::vector<std::vector<int>> neighbor_lists(const std::vector<Vec>& positions,
                                                    double radius) {
  std::vector<std::vector<int>> lists(positions.size());
  for (const auto& [i, j] : neighbor_pairs(positions, radius)) {
    lists[i].push_back(j);
    lists[j].push_back(i);
  }
  for (auto& l : lists) std::sort(l.begin(), l.end());
  return lists;
}

}  // namespace gcbf
