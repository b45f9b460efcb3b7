// Copyright 2026 The KCOT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exact (unregularized) solvers used as references for the entropic ones:
// min-cost flow transport on discretized marginals, and the Hungarian method
// for one-to-one assignment.

#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

#include "kcot/core.hpp"

namespace kcot {

// ---------------------------------------------------------------------------
// Min-cost flow
// ---------------------------------------------------------------------------

struct ExactOtResult {
  Matrix plan;
  double objective = 0.0;
  /// Integer units per (region, label); plan = flow / denominator.
  std::vector<std::int64_t> flow;
  std::vector<std::int64_t> source_units;
  std::vector<std::int64_t> target_units;
  std::int64_t denominator = 0;
  /// True when the residual graph has no negative cycle at the end.
  bool certified = false;
};

inline constexpr std::int64_t kDefaultDenominator = 10'000;
inline constexpr std::int64_t kMaxDenominator = std::int64_t{1} << 40;

/// Rounds a marginal to integer multiples of 1/denominator. The rounding
/// residual goes to the largest entry (lowest index on ties).
inline std::vector<std::int64_t> discretize_marginal(const Marginal& w, std::int64_t denominator) {
  detail::require(denominator >= 1, "denominator must be positive");
  detail::require(denominator <= kMaxDenominator, "denominator overflow");
  std::vector<std::int64_t> units(static_cast<std::size_t>(w.size()));
  std::int64_t total = 0;
  Index largest = 0;
  for (Index k = 0; k < w.size(); ++k) {
    units[static_cast<std::size_t>(k)] = std::llround(w[k] * static_cast<double>(denominator));
    total += units[static_cast<std::size_t>(k)];
    if (w[k] > w[largest]) largest = k;
  }
  units[static_cast<std::size_t>(largest)] += denominator - total;
  detail::require(units[static_cast<std::size_t>(largest)] >= 0,
                  "infeasible rounding: marginal cannot be represented at this denominator");
  return units;
}

namespace detail {

class FlowGraph {
 public:
  struct Edge {
    int to;
    std::int64_t cap;
    double cost;
  };

  explicit FlowGraph(int nodes) : adj_(static_cast<std::size_t>(nodes)) {}

  int add_edge(int from, int to, std::int64_t cap, double cost) {
    const int id = static_cast<int>(edges_.size());
    edges_.push_back({to, cap, cost});
    adj_[static_cast<std::size_t>(from)].push_back(id);
    edges_.push_back({from, 0, -cost});
    adj_[static_cast<std::size_t>(to)].push_back(id + 1);
    return id;
  }

  // Successive shortest paths with queue-based Bellman-Ford; costs may be
  // negative but the initial graph is acyclic.
  std::int64_t min_cost_flow(int s, int t, std::int64_t demand) {
    const std::size_t n = adj_.size();
    constexpr double kEps = 1e-12;
    std::int64_t pushed = 0;
    std::vector<double> dist(n);
    std::vector<int> parent_edge(n);
    std::vector<char> in_queue(n);
    while (pushed < demand) {
      std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
      std::fill(parent_edge.begin(), parent_edge.end(), -1);
      std::deque<int> queue{s};
      dist[static_cast<std::size_t>(s)] = 0.0;
      in_queue[static_cast<std::size_t>(s)] = 1;
      while (!queue.empty()) {
        const int x = queue.front();
        queue.pop_front();
        in_queue[static_cast<std::size_t>(x)] = 0;
        for (int id : adj_[static_cast<std::size_t>(x)]) {
          const Edge& e = edges_[static_cast<std::size_t>(id)];
          if (e.cap <= 0) continue;
          const double nd = dist[static_cast<std::size_t>(x)] + e.cost;
          if (nd < dist[static_cast<std::size_t>(e.to)] - kEps) {
            dist[static_cast<std::size_t>(e.to)] = nd;
            parent_edge[static_cast<std::size_t>(e.to)] = id;
            if (!in_queue[static_cast<std::size_t>(e.to)]) {
              in_queue[static_cast<std::size_t>(e.to)] = 1;
              queue.push_back(e.to);
            }
          }
        }
      }
      if (parent_edge[static_cast<std::size_t>(t)] < 0) break;
      std::int64_t bottleneck = demand - pushed;
      for (int v = t; v != s;) {
        const int id = parent_edge[static_cast<std::size_t>(v)];
        bottleneck = std::min(bottleneck, edges_[static_cast<std::size_t>(id)].cap);
        v = edges_[static_cast<std::size_t>(id ^ 1)].to;
      }
      for (int v = t; v != s;) {
        const int id = parent_edge[static_cast<std::size_t>(v)];
        edges_[static_cast<std::size_t>(id)].cap -= bottleneck;
        edges_[static_cast<std::size_t>(id ^ 1)].cap += bottleneck;
        v = edges_[static_cast<std::size_t>(id ^ 1)].to;
      }
      pushed += bottleneck;
    }
    return pushed;
  }

  // Bellman-Ford from a virtual root connected to every node.
  bool has_negative_cycle(double tol) const {
    const std::size_t n = adj_.size();
    std::vector<double> dist(n, 0.0);
    for (std::size_t round = 0; round < n; ++round) {
      bool changed = false;
      for (std::size_t x = 0; x < n; ++x) {
        for (int id : adj_[x]) {
          const Edge& e = edges_[static_cast<std::size_t>(id)];
          if (e.cap <= 0) continue;
          if (dist[x] + e.cost < dist[static_cast<std::size_t>(e.to)] - tol) {
            dist[static_cast<std::size_t>(e.to)] = dist[x] + e.cost;
            changed = true;
          }
        }
      }
      if (!changed) return false;
    }
    return true;
  }

  std::int64_t reverse_cap(int forward_id) const { return edges_[static_cast<std::size_t>(forward_id ^ 1)].cap; }

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
};

}  // namespace detail

/// Exact minimum-cost transport between the discretized marginals.
inline ExactOtResult exact_ot_oracle(const CostMatrix& cost, const Marginal& u, const Marginal& v,
                                     std::int64_t denominator = kDefaultDenominator) {
  const Index m = cost.rows();
  const Index n = cost.cols();
  detail::require(u.size() == m && v.size() == n, "marginal lengths do not match cost shape");
  ExactOtResult r;
  r.denominator = denominator;
  r.source_units = discretize_marginal(u, denominator);
  r.target_units = discretize_marginal(v, denominator);

  const int source = static_cast<int>(m + n);
  const int sink = source + 1;
  detail::FlowGraph g(static_cast<int>(m + n + 2));
  for (Index k = 0; k < m; ++k) g.add_edge(source, static_cast<int>(k), r.source_units[static_cast<std::size_t>(k)], 0.0);
  for (Index i = 0; i < n; ++i) {
    g.add_edge(static_cast<int>(m + i), sink, r.target_units[static_cast<std::size_t>(i)], 0.0);
  }
  std::vector<int> arc(static_cast<std::size_t>(m * n));
  for (Index k = 0; k < m; ++k) {
    for (Index i = 0; i < n; ++i) {
      arc[static_cast<std::size_t>(k * n + i)] =
          g.add_edge(static_cast<int>(k), static_cast<int>(m + i), denominator, cost(k, i));
    }
  }
  const std::int64_t pushed = g.min_cost_flow(source, sink, denominator);
  detail::require(pushed == denominator, "min-cost flow could not route all mass");

  r.flow.resize(arc.size());
  r.plan = Matrix::Zero(m, n);
  const double scale = 1.0 / static_cast<double>(denominator);
  for (Index k = 0; k < m; ++k) {
    for (Index i = 0; i < n; ++i) {
      const std::int64_t f = g.reverse_cap(arc[static_cast<std::size_t>(k * n + i)]);
      r.flow[static_cast<std::size_t>(k * n + i)] = f;
      r.plan(k, i) = static_cast<double>(f) * scale;
    }
  }
  r.objective = r.plan.cwiseProduct(cost.entries()).sum();
  r.certified = !g.has_negative_cycle(1e-9);
  return r;
}

// ---------------------------------------------------------------------------
// Hungarian method
// ---------------------------------------------------------------------------

struct Assignment {
  /// Column assigned to each row; -1 when the row went to a padding column.
  std::vector<Index> row_to_col;
  double objective = 0.0;
};

/// Minimum-cost perfect assignment on a square cost matrix, O(n^3) with dual
/// potentials.
inline Assignment hungarian(const CostMatrix& cost) {
  const Index n = cost.rows();
  detail::require(n >= 1, "hungarian: empty matrix");
  detail::require(cost.cols() == n, "hungarian: cost matrix must be square, got " +
                                        detail::shape_str(cost.rows(), cost.cols()));
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; index 0 is the virtual column used while growing a path.
  std::vector<double> row_pot(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<double> col_pot(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> col_owner(static_cast<std::size_t>(n + 1), 0);
  std::vector<Index> way(static_cast<std::size_t>(n + 1), 0);
  for (Index row = 1; row <= n; ++row) {
    col_owner[0] = row;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = col_owner[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - row_pot[static_cast<std::size_t>(i0)] -
                           col_pot[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          row_pot[static_cast<std::size_t>(col_owner[static_cast<std::size_t>(j)])] += delta;
          col_pot[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (col_owner[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      col_owner[static_cast<std::size_t>(j0)] = col_owner[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment a;
  a.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= n; ++j) {
    a.row_to_col[static_cast<std::size_t>(col_owner[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  for (Index k = 0; k < n; ++k) a.objective += cost(k, a.row_to_col[static_cast<std::size_t>(k)]);
  return a;
}

/// Rectangular assignment by padding to a square matrix with dummy rows or
/// columns at cost max(C) + 1. Rows matched to a dummy column report -1, and
/// the objective counts real pairs only.
inline Assignment hungarian_rectangular(const CostMatrix& cost) {
  const Index m = cost.rows();
  const Index n = cost.cols();
  if (m == n) return hungarian(cost);
  const Index size = std::max(m, n);
  Matrix padded = Matrix::Constant(size, size, cost.entries().maxCoeff() + 1.0);
  padded.topLeftCorner(m, n) = cost.entries();
  const Assignment full = hungarian(CostMatrix(std::move(padded)));
  Assignment a;
  a.row_to_col.assign(static_cast<std::size_t>(m), -1);
  for (Index k = 0; k < m; ++k) {
    const Index col = full.row_to_col[static_cast<std::size_t>(k)];
    if (col < n) {
      a.row_to_col[static_cast<std::size_t>(k)] = col;
      a.objective += cost(k, col);
    }
  }
  return a;
}

}  // namespace kcot
