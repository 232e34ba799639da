#pragma once

#include <utility>
#include <vector>

#include "icalpha/errors.hpp"

namespace icalpha {

using ItemPair = std::pair<int, int>;

/// Number of unordered item pairs for k items.
inline int pair_count(int k) { return k * (k - 1) / 2; }

/// Ordered list of item pairs (i, j), 1-based, i < j, lexicographic:
/// (1,2), (1,3), ..., (1,k), (2,3), ..., (k-1,k). This is the layout of
/// the pairwise moment vector U_p and the alpha design rows.
inline std::vector<ItemPair> build_pair_index(int k) {
  if (k < 2) throw InputError("build_pair_index: need at least 2 items, got " + std::to_string(k));
  std::vector<ItemPair> pairs;
  pairs.reserve(static_cast<std::size_t>(pair_count(k)));
  for (int i = 1; i <= k - 1; ++i)
    for (int j = i + 1; j <= k; ++j) pairs.emplace_back(i, j);
  return pairs;
}

}  // namespace icalpha
