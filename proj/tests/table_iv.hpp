#pragma once

#include <vector>

#include "fsdg/hierarchy.hpp"

namespace fsdg::test {

/// The eight classes of the 4-level bird excerpt, padded with dense filler
/// classes so every level's ids are contiguous.
inline const std::vector<std::vector<int>>& table_iv_rows() {
  static const std::vector<std::vector<int>> rows = {
      {8, 5, 3, 3},     {9, 6, 3, 3},     {10, 5, 3, 3},    {11, 7, 3, 3},
      {12, 8, 3, 3},    {28, 19, 12, 3},  {29, 19, 12, 3},  {51, 36, 19, 8}};
  return rows;
}

inline GranularityHierarchy table_iv_hierarchy() {
  constexpr int kFine = 52, kL1 = 37, kL2 = 20, kL3 = 9;
  std::vector<int> p1(kL1, -1), p2(kL2, -1), f1(kFine, -1);
  for (const auto& r : table_iv_rows()) {
    f1[r[0]] = r[1];
    p1[r[1]] = r[2];
    p2[r[2]] = r[3];
  }
  std::vector<bool> used(kL1, false);
  for (int c : f1) {
    if (c >= 0) used[c] = true;
  }
  int next = 0;
  for (int f = 0; f < kFine; ++f) {
    if (f1[f] >= 0) continue;
    while (next < kL1 && used[next]) ++next;
    f1[f] = next < kL1 ? next++ : f % kL1;
  }
  for (int c = 0; c < kL1; ++c) {
    if (p1[c] < 0) p1[c] = c % kL2;
  }
  for (int c = 0; c < kL2; ++c) {
    if (p2[c] < 0) p2[c] = c % kL3;
  }
  std::vector<std::vector<int>> rows;
  for (int f = 0; f < kFine; ++f) rows.push_back({f, f1[f], p1[f1[f]], p2[p1[f1[f]]]});
  return GranularityHierarchy::from_rows(rows);
}

inline const std::vector<int>& table_iv_classes() {
  static const std::vector<int> ids = {8, 9, 10, 11, 12, 28, 29, 51};
  return ids;
}

/// Balanced tree with the given class counts per level (fine first).
inline GranularityHierarchy balanced_tree(const std::vector<int>& counts) {
  std::vector<std::vector<int>> rows;
  for (int f = 0; f < counts[0]; ++f) {
    std::vector<int> row{f};
    for (std::size_t g = 1; g < counts.size(); ++g) row.push_back(f / (counts[0] / counts[g]));
    rows.push_back(row);
  }
  return GranularityHierarchy::from_rows(rows);
}

}  // namespace fsdg::test
