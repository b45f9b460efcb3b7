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

// Region-to-label aggregation strategies. Every strategy turns an M x N
// region/label similarity matrix into one score per label.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "kcot/core.hpp"
#include "kcot/cost.hpp"
#include "kcot/exact.hpp"
#include "kcot/knowledge_ot.hpp"
#include "kcot/sinkhorn.hpp"

namespace kcot {

/// Per-label logits for one image.
class ScoreVector {
 public:
  explicit ScoreVector(Vector s) : s_(std::move(s)) {
    detail::require(s_.size() >= 1, "score vector must be non-empty");
    detail::require(s_.allFinite(), "score vector contains non-finite values");
  }
  const Vector& values() const { return s_; }
  Index size() const { return s_.size(); }
  double operator[](Index i) const { return s_[i]; }

 private:
  Vector s_;
};

/// Mean of each label's similarities over regions.
inline ScoreVector aggregate_average(const Matrix& sims) {
  detail::require(sims.rows() >= 1 && sims.cols() >= 1, "similarity matrix must be non-empty");
  return ScoreVector(sims.colwise().mean().transpose());
}

/// Softmax weights over regions computed per label column.
inline Matrix reweight_weights(const Matrix& sims, double tau) {
  return row_softmax(sims.transpose(), tau).transpose();
}

/// Each label's score is a convex combination of its own column, weighted by
/// the softmax of that column at temperature tau. Labels never compete for
/// regions.
inline ScoreVector aggregate_reweight(const Matrix& sims, double tau) {
  detail::require(sims.rows() >= 1 && sims.cols() >= 1, "similarity matrix must be non-empty");
  const Matrix w = reweight_weights(sims, tau);
  return ScoreVector(w.cwiseProduct(sims).colwise().sum().transpose());
}

/// s_i = sum_k plan_ki * sims_ki.
inline ScoreVector aggregate_plan(const Matrix& sims, const Matrix& plan) {
  detail::require(sims.rows() == plan.rows() && sims.cols() == plan.cols(),
                  "similarities " + detail::shape_str(sims.rows(), sims.cols()) + " and plan " +
                      detail::shape_str(plan.rows(), plan.cols()) + " differ in shape");
  return ScoreVector(plan.cwiseProduct(sims).colwise().sum().transpose());
}

inline ScoreVector aggregate_plan(const Matrix& sims, const TransportPlan& plan) {
  return aggregate_plan(sims, plan.entries());
}

/// Min-max scaling to [0, 1]; a constant vector maps to all 0.5.
inline Vector min_max_normalize(const Vector& s) {
  const double lo = s.minCoeff();
  const double hi = s.maxCoeff();
  if (hi == lo) return Vector::Constant(s.size(), 0.5);
  return ((s.array() - lo) / (hi - lo)).matrix();
}

/// Final per-label score: local and global streams each min-max normalized,
/// then averaged.
inline ScoreVector final_score(const ScoreVector& local, const ScoreVector& global) {
  detail::require(local.size() == global.size(), "score vectors differ in length");
  return ScoreVector(0.5 * (min_max_normalize(local.values()) + min_max_normalize(global.values())));
}

enum class Strategy { kAverage, kReweight, kBipartite, kOt, kKcot };

inline constexpr std::array<Strategy, 5> kAllStrategies = {Strategy::kAverage, Strategy::kReweight,
                                                           Strategy::kBipartite, Strategy::kOt, Strategy::kKcot};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kAverage: return "average";
    case Strategy::kReweight: return "reweight";
    case Strategy::kBipartite: return "bipartite";
    case Strategy::kOt: return "ot";
    case Strategy::kKcot: return "kcot";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies) {
    if (strategy_name(s) == name) return s;
  }
  throw Error("unknown strategy '" + std::string(name) +
              "' (expected average|reweight|bipartite|ot|kcot)");
}

struct MatchResult {
  Strategy strategy;
  /// Region weights per label, scaled so each column carries 1/N of the mass.
  Matrix weights;
  ScoreVector scores;
  /// Present for the transport strategies.
  std::optional<SolveReport> report;
};

/// One-to-one label-to-region assignment on the similarity cost, as a plan
/// with 1/N on each matched pair.
inline Matrix bipartite_plan(const CostMatrix& cost) {
  const Index m = cost.rows();
  const Index n = cost.cols();
  const Assignment a = hungarian_rectangular(cost);
  Matrix plan = Matrix::Zero(m, n);
  for (Index k = 0; k < m; ++k) {
    const Index col = a.row_to_col[static_cast<std::size_t>(k)];
    if (col >= 0) plan(k, col) = 1.0 / static_cast<double>(n);
  }
  return plan;
}

/// Runs one strategy end to end. `teacher` is consulted only by kcot in
/// training mode.
inline MatchResult run_strategy(Strategy strategy, const FeatureSet& visual, const LabelSet& labels,
                                const std::optional<TeacherInputs>& teacher, const SolverConfig& cfg,
                                SolveMode mode = SolveMode::kInference) {
  cfg.validate();
  const Matrix sims = cosine_similarity_matrix(visual, labels);
  const double n = static_cast<double>(labels.size());
  const double m = static_cast<double>(visual.size());
  switch (strategy) {
    case Strategy::kAverage: {
      Matrix w = Matrix::Constant(sims.rows(), sims.cols(), 1.0 / (m * n));
      return {strategy, std::move(w), aggregate_average(sims), std::nullopt};
    }
    case Strategy::kReweight: {
      Matrix w = reweight_weights(sims, cfg.tau) / n;
      return {strategy, std::move(w), aggregate_reweight(sims, cfg.tau), std::nullopt};
    }
    case Strategy::kBipartite: {
      Matrix plan = bipartite_plan(build_cost(visual, labels, cfg.tau));
      ScoreVector s = aggregate_plan(sims, plan);
      return {strategy, std::move(plan), std::move(s), std::nullopt};
    }
    case Strategy::kOt: {
      SolveReport r = sinkhorn(build_cost(visual, labels, cfg.tau), Marginal::uniform(visual.size()),
                               Marginal::uniform(labels.size()), cfg.lambda1, sinkhorn_options(cfg));
      ScoreVector s = aggregate_plan(sims, r.plan);
      Matrix w = r.plan.entries();
      return {strategy, std::move(w), std::move(s), std::move(r)};
    }
    case Strategy::kKcot: {
      SolveReport r = solve_kcot(visual, labels, teacher, cfg, mode);
      ScoreVector s = aggregate_plan(sims, r.plan);
      Matrix w = r.plan.entries();
      return {strategy, std::move(w), std::move(s), std::move(r)};
    }
  }
  throw Error("unhandled strategy");
}

}  // namespace kcot
