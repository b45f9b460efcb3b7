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

// Inputs to the transport solver: similarity cost, label-presence source
// marginal, masked teacher plan and the teacher-transformed cost.

#pragma once

#include <cmath>
#include <limits>

#include "kcot/core.hpp"

namespace kcot {

/// C_ki = 1 - softmax_i(cos(x_k, t_i) / tau).
///
/// Each row of (1 - C) is a probability vector over labels, so entries fall in
/// (0, 1) whenever N > 1. A single label gives the zero matrix.
inline CostMatrix build_cost(const FeatureSet& visual, const LabelSet& labels, double tau) {
  const Matrix sims = cosine_similarity_matrix(visual, labels);
  Matrix c = row_softmax(sims, tau);
  c = (1.0 - c.array()).matrix();
  return CostMatrix(std::move(c));
}

/// Label-presence source marginal: softmax over regions of each region's best
/// label similarity. Only the per-region maximum enters, so relabeling has no
/// effect on the result.
inline Marginal lpd_marginal(const FeatureSet& visual, const LabelSet& labels, double tau) {
  const Matrix sims = cosine_similarity_matrix(visual, labels);
  Matrix best(1, sims.rows());
  for (Index k = 0; k < sims.rows(); ++k) best(0, k) = sims.row(k).maxCoeff();
  const Matrix w = row_softmax(best, tau);
  return Marginal(w.row(0).transpose());
}

/// Teacher plan from frozen features: row softmax of frozen similarities with
/// absent-label columns replaced by the global minimum of that softmax.
///
/// The result is not renormalized; rows generally do not sum to 1 once any
/// column is masked.
inline TransportPlan teacher_plan(const FeatureSet& frozen_visual, const LabelSet& frozen_labels,
                                  const LabelVector& y, double tau) {
  detail::require(y.size() == frozen_labels.size(),
                  "label vector has length " + std::to_string(y.size()) + " but there are " +
                      std::to_string(frozen_labels.size()) + " labels");
  Matrix p = row_softmax(cosine_similarity_matrix(frozen_visual, frozen_labels), tau);
  const double floor = p.minCoeff();
  for (Index i = 0; i < p.cols(); ++i) {
    if (!y[i]) p.col(i).setConstant(floor);
  }
  detail::require(floor > 0.0,
                  "teacher plan underflowed to zero; increase tau or check the frozen features");
  return TransportPlan::teacher(std::move(p));
}

/// C~_ki = C_ki - lambda2 * log(teacher_ki).
inline CostMatrix transform_cost(const CostMatrix& cost, const TransportPlan& teacher, double lambda2) {
  detail::require(cost.rows() == teacher.rows() && cost.cols() == teacher.cols(),
                  "cost " + detail::shape_str(cost.rows(), cost.cols()) + " and teacher " +
                      detail::shape_str(teacher.rows(), teacher.cols()) + " differ in shape");
  detail::require(std::isfinite(lambda2) && lambda2 >= 0.0, "lambda2 must be >= 0");
  detail::require((teacher.entries().array() > 0.0).all(),
                  "teacher plan has nonpositive entries; log is undefined");
  if (lambda2 == 0.0) return cost;
  Matrix c = cost.entries();
  for (Index k = 0; k < c.rows(); ++k) {
    for (Index i = 0; i < c.cols(); ++i) c(k, i) -= lambda2 * std::log(teacher(k, i));
  }
  return CostMatrix(std::move(c));
}

}  // namespace kcot
