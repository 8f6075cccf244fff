#pragma once

#include <utility>
#include <vector>

namespace owvis {

/// Dense cost matrix, rows = queries, columns = ground-truth instances.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

struct MatchResult {
  /// (query, gt) pairs sorted by query index.
  std::vector<std::pair<int, int>> assignment;
  double cost = 0.0;

  std::vector<int> matched_queries() const;
};

/// Minimum-cost assignment of every column to a distinct row (requires
/// cols <= rows). Among optimal assignments the one whose (query, gt) pair
/// list is lexicographically smallest is returned.
MatchResult solve_assignment(const CostMatrix& cost);

}  // namespace owvis
