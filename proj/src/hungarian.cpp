#include "owvis/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "owvis/error.hpp"

namespace owvis {

std::vector<int> MatchResult::matched_queries() const {
  std::vector<int> q;
  for (const auto& [query, gt] : assignment) q.push_back(query);
  return q;
}

namespace {

// Shortest augmenting path Hungarian method on the sub-matrix selected by
// `rows` (queries) and `cols` (gts); every selected gt gets a distinct query.
// Returns the optimal cost and fills gt_to_query with positions into `rows`.
double min_cost(const CostMatrix& cost, const std::vector<int>& rows, const std::vector<int>& cols,
                std::vector<int>* gt_to_query) {
  const int n = static_cast<int>(cols.size());
  const int m = static_cast<int>(rows.size());
  if (n == 0) {
    if (gt_to_query) gt_to_query->clear();
    return 0.0;
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  auto a = [&](int i, int j) { return cost.at(rows[static_cast<std::size_t>(j - 1)], cols[static_cast<std::size_t>(i - 1)]); };
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  if (gt_to_query) gt_to_query->assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    total += a(i, j);
    if (gt_to_query) (*gt_to_query)[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return total;
}

}  // namespace

MatchResult solve_assignment(const CostMatrix& cost) {
  if (cost.cols > cost.rows)
    throw ConfigError("cannot match " + std::to_string(cost.cols) + " instances with " + std::to_string(cost.rows) +
                      " queries");
  for (double c : cost.values)
    if (!std::isfinite(c)) throw ValidationError("matching cost matrix contains a non-finite entry");

  std::vector<int> free_rows(static_cast<std::size_t>(cost.rows)), free_cols(static_cast<std::size_t>(cost.cols));
  for (int i = 0; i < cost.rows; ++i) free_rows[static_cast<std::size_t>(i)] = i;
  for (int j = 0; j < cost.cols; ++j) free_cols[static_cast<std::size_t>(j)] = j;
  const double optimum = min_cost(cost, free_rows, free_cols, nullptr);
  const double tol = 1e-9 * std::max(1.0, std::abs(optimum));

  // Walk queries in order and give each the smallest gt that still admits an
  // optimal completion.
  MatchResult result;
  double fixed = 0.0;
  for (int q = 0; q < cost.rows && !free_cols.empty(); ++q) {
    std::vector<int> rest_rows;
    for (int r : free_rows)
      if (r != q) rest_rows.push_back(r);
    bool decided = false;
    for (std::size_t k = 0; k < free_cols.size() && !decided; ++k) {
      const int g = free_cols[k];
      std::vector<int> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(k));
      if (rest_cols.size() > rest_rows.size()) continue;
      const double total = fixed + cost.at(q, g) + min_cost(cost, rest_rows, rest_cols, nullptr);
      if (total <= optimum + tol) {
        result.assignment.emplace_back(q, g);
        fixed += cost.at(q, g);
        free_cols = std::move(rest_cols);
        decided = true;
      }
    }
    free_rows = std::move(rest_rows);
  }
  result.cost = 0.0;
  for (const auto& [q, g] : result.assignment) result.cost += cost.at(q, g);
  return result;
}

}  // namespace owvis
