#pragma once

#include "jtln/core_types.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace jtln {

namespace detail {

// Tree path between two nodes of the basis graph. Nodes 0..m-1 are rows,
// m..m+n-1 are columns; edges are the basic cells. Returns the cells along
// the path from `from` to `to`, in order.
template <typename Flags>
std::vector<int> basis_tree_path(const Flags& basic, int m, int n, int from, int to) {
  const int node_count = m + n;
  std::vector<int> parent_node(node_count, -1);
  std::vector<int> parent_cell(node_count, -1);
  std::vector<char> seen(node_count, 0);
  std::queue<int> frontier;
  frontier.push(from);
  seen[from] = 1;
  while (!frontier.empty()) {
    const int node = frontier.front();
    frontier.pop();
    if (node == to) break;
    if (node < m) {
      for (int j = 0; j < n; ++j) {
        const int cell = node * n + j;
        if (basic[cell] && !seen[m + j]) {
          seen[m + j] = 1;
          parent_node[m + j] = node;
          parent_cell[m + j] = cell;
          frontier.push(m + j);
        }
      }
    } else {
      const int j = node - m;
      for (int i = 0; i < m; ++i) {
        const int cell = i * n + j;
        if (basic[cell] && !seen[i]) {
          seen[i] = 1;
          parent_node[i] = node;
          parent_cell[i] = cell;
          frontier.push(i);
        }
      }
    }
  }
  std::vector<int> path;
  for (int node = to; node != from; node = parent_node[node]) {
    path.push_back(parent_cell[node]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

// Exact minimizer of <plan, C>_F over couplings of (mu, nu), found by the
// transportation simplex: northwest-corner initial basis, dual (MODI) pricing,
// Bland's smallest-index rule for both the entering and the leaving cell to
// guard against cycling on degenerate instances. Intended as a small-instance
// reference; instances above 64 cells are rejected.
//
// The returned solution has converged = true, iterations_used = pivot count,
// and all-ones placeholders for the scaling vectors. When several optimal
// plans exist the loss value is still unique; which plan is returned depends
// on the pivot order.
template <typename Scalar>
OtSolutionT<Scalar> exact_ot_solve(const HistogramT<Scalar>& mu, const HistogramT<Scalar>& nu,
                                   const CostMatrixT<Scalar>& cost) {
  mu.validate();
  nu.validate();
  cost.validate();
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (mu.size() != m || nu.size() != n)
    throw DimensionMismatch("marginal sizes do not match the cost matrix");
  if (m * n > 64)
    throw InstanceTooLarge("exact transport solver accepts at most 64 cells, got " +
                           std::to_string(m * n));

  MatrixX<Scalar> flow = MatrixX<Scalar>::Zero(m, n);
  std::vector<char> basic(static_cast<std::size_t>(m * n), 0);

  // Northwest-corner start: walk from (0,0) to (m-1,n-1) moving down when the
  // current row is exhausted, right otherwise. Marks exactly m+n-1 cells, so
  // the basis graph is a spanning tree (possibly with zero-flow cells).
  {
    VectorX<Scalar> row_rest = mu.weights;
    VectorX<Scalar> col_rest = nu.weights;
    int i = 0, j = 0;
    while (true) {
      const Scalar f = std::min(row_rest[i], col_rest[j]);
      flow(i, j) = f;
      basic[static_cast<std::size_t>(i * n + j)] = 1;
      row_rest[i] -= f;
      col_rest[j] -= f;
      if (i == m - 1 && j == n - 1) break;
      if (row_rest[i] <= col_rest[j] && i < m - 1) {
        ++i;
      } else if (j < n - 1) {
        ++j;
      } else {
        ++i;
      }
    }
  }

  const Scalar cost_scale = std::max(Scalar(1), cost.entries.template lpNorm<Eigen::Infinity>());
  const Scalar price_tol = cost_scale * Scalar(1e-12);
  const int max_pivots = 10000;
  int pivots = 0;

  VectorX<Scalar> row_dual(m), col_dual(n);
  while (pivots < max_pivots) {
    // Duals: solve row_dual[i] + col_dual[j] = c_ij over the basis tree,
    // anchored at row_dual[0] = 0.
    {
      std::vector<char> row_set(static_cast<std::size_t>(m), 0);
      std::vector<char> col_set(static_cast<std::size_t>(n), 0);
      row_dual[0] = Scalar(0);
      row_set[0] = 1;
      std::queue<int> frontier;  // nodes, rows then columns offset by m
      frontier.push(0);
      while (!frontier.empty()) {
        const int node = frontier.front();
        frontier.pop();
        if (node < m) {
          for (int j = 0; j < n; ++j) {
            if (basic[static_cast<std::size_t>(node * n + j)] && !col_set[static_cast<std::size_t>(j)]) {
              col_dual[j] = cost.entries(node, j) - row_dual[node];
              col_set[static_cast<std::size_t>(j)] = 1;
              frontier.push(m + j);
            }
          }
        } else {
          const int j = node - m;
          for (int i = 0; i < m; ++i) {
            if (basic[static_cast<std::size_t>(i * n + j)] && !row_set[static_cast<std::size_t>(i)]) {
              row_dual[i] = cost.entries(i, j) - col_dual[j];
              row_set[static_cast<std::size_t>(i)] = 1;
              frontier.push(i);
            }
          }
        }
      }
    }

    // Entering cell: first (smallest flat index) nonbasic cell with negative
    // reduced cost.
    int enter = -1;
    for (int idx = 0; idx < m * n; ++idx) {
      if (basic[static_cast<std::size_t>(idx)]) continue;
      const int i = idx / n, j = idx % n;
      if (cost.entries(i, j) - row_dual[i] - col_dual[j] < -price_tol) {
        enter = idx;
        break;
      }
    }
    if (enter < 0) break;  // optimal

    const int ei = enter / n, ej = enter % n;
    // Closing the entering edge against the basis tree yields one cycle:
    // entering cell, then the tree path from column ej back to row ei, with
    // alternating signs starting at -.
    const std::vector<int> path = detail::basis_tree_path(basic, m, n, m + ej, ei);

    Scalar theta = std::numeric_limits<Scalar>::max();
    int leave = -1;
    for (std::size_t p = 0; p < path.size(); p += 2) {  // minus positions
      const int cell = path[p];
      const Scalar f = flow(cell / n, cell % n);
      if (f < theta - price_tol || (f <= theta + price_tol && (leave < 0 || cell < leave))) {
        theta = std::min(theta, f);
        leave = cell;
      }
    }

    flow(ei, ej) += theta;
    for (std::size_t p = 0; p < path.size(); ++p) {
      const int cell = path[p];
      flow(cell / n, cell % n) += (p % 2 == 0) ? -theta : theta;
    }
    flow(leave / n, leave % n) = Scalar(0);
    basic[static_cast<std::size_t>(leave)] = 0;
    basic[static_cast<std::size_t>(enter)] = 1;
    ++pivots;
  }
  if (pivots >= max_pivots)
    throw std::runtime_error("transportation simplex exceeded its pivot budget");

  OtSolutionT<Scalar> solution;
  solution.plan.coupling = flow.cwiseMax(Scalar(0));
  solution.plan.row_marginal = mu;
  solution.plan.col_marginal = nu;
  solution.loss = (solution.plan.coupling.array() * cost.entries.array()).sum();
  solution.u = VectorX<Scalar>::Ones(m);
  solution.v = VectorX<Scalar>::Ones(n);
  solution.iterations_used = pivots;
  solution.converged = true;
  return solution;
}

}  // namespace jtln
