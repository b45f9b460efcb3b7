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

// Multi-label retrieval metrics over a B x N score matrix and its binary
// ground truth.
//
// Tie-breaking is deterministic: top-k selection prefers the lower label
// index, and per-class AP ranking prefers the lower sample index.

#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "kcot/core.hpp"

namespace kcot {

struct TopKMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline void check_scores(const Matrix& scores, const Matrix& truth) {
  require(scores.rows() >= 1 && scores.cols() >= 1, "score matrix must be non-empty");
  require(scores.rows() == truth.rows() && scores.cols() == truth.cols(),
          "scores " + shape_str(scores.rows(), scores.cols()) + " and labels " +
              shape_str(truth.rows(), truth.cols()) + " differ in shape");
  require(scores.allFinite(), "scores contain non-finite values");
  require(((truth.array() == 0.0) || (truth.array() == 1.0)).all(), "labels must be 0 or 1");
}

inline double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

/// Indices of the k largest entries of `row`, ties to the lower index.
inline std::vector<Index> top_k(const Eigen::Ref<const Vector>& row, Index k) {
  std::vector<Index> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return row[a] > row[b]; });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

/// P@k = hits / (B k); R@k = hits / total positives, where samples without
/// positives add nothing to the recall denominator (they still count toward
/// B). The recall denominator is not capped at k.
inline TopKMetrics precision_recall_f1_at_k(const Matrix& scores, const Matrix& truth, Index k) {
  detail::check_scores(scores, truth);
  detail::require(k >= 1 && k <= scores.cols(), "k must be in [1, N]");
  double hits = 0.0;
  double positives = 0.0;
  for (Index b = 0; b < scores.rows(); ++b) {
    const Vector row = scores.row(b).transpose();
    for (Index i : top_k(row, k)) hits += truth(b, i);
    positives += truth.row(b).sum();
  }
  detail::require(positives > 0.0, "recall is undefined: no sample has a positive label");
  TopKMetrics m;
  m.precision = hits / (static_cast<double>(scores.rows()) * static_cast<double>(k));
  m.recall = hits / positives;
  m.f1 = detail::harmonic_mean(m.precision, m.recall);
  return m;
}

/// Average precision of one ranked column: mean over positives of the
/// precision at that positive's rank.
inline double average_precision(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Vector>& truth) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (truth[order[r]] == 1.0) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

/// Mean of per-class AP over classes that have at least one positive sample.
inline double mean_average_precision(const Matrix& scores, const Matrix& truth) {
  detail::check_scores(scores, truth);
  double total = 0.0;
  Index classes = 0;
  for (Index i = 0; i < scores.cols(); ++i) {
    if (truth.col(i).sum() == 0.0) continue;
    total += average_precision(scores.col(i), truth.col(i));
    ++classes;
  }
  detail::require(classes > 0, "mAP is undefined: no class has a positive sample");
  return total / static_cast<double>(classes);
}

}  // namespace kcot
