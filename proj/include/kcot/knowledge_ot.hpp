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

// Knowledge-constrained transport: entropic OT with a label-presence source
// marginal and a KL pull toward a masked teacher plan.
//
//   min_P <P, C> - l1 H(P) + l2 KL(P || P~)
//
// is the same problem as  min_P <P, C - l2 log P~> - (l1 + l2) H(P), so the
// training-mode solve is a plain Sinkhorn run on the transformed cost.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "kcot/core.hpp"
#include "kcot/cost.hpp"
#include "kcot/sinkhorn.hpp"

namespace kcot {

enum class SolveMode { kTrain, kInference };

inline SolveMode parse_solve_mode(std::string_view s) {
  if (s == "train") return SolveMode::kTrain;
  if (s == "inference") return SolveMode::kInference;
  throw Error("unknown solve mode '" + std::string(s) + "' (expected train|inference)");
}

inline SinkhornOptions sinkhorn_options(const SolverConfig& cfg) {
  return SinkhornOptions{cfg.max_iter, cfg.tol, cfg.log_domain};
}

/// Frozen-encoder features and ground truth; required in training mode only.
struct TeacherInputs {
  const FeatureSet& frozen_visual;
  const LabelSet& frozen_labels;
  const LabelVector& y;
};

/// Training mode solves Sinkhorn on the teacher-transformed cost with
/// regularization lambda1 + lambda2. Inference mode has no teacher and solves
/// on the plain cost with lambda1. Both use the label-presence marginal on
/// regions and a uniform marginal on labels.
inline SolveReport solve_kcot(const FeatureSet& visual, const LabelSet& labels,
                              const std::optional<TeacherInputs>& teacher, const SolverConfig& cfg,
                              SolveMode mode) {
  cfg.validate();
  const CostMatrix cost = build_cost(visual, labels, cfg.tau);
  const Marginal u = lpd_marginal(visual, labels, cfg.tau);
  const Marginal v = Marginal::uniform(labels.size());
  if (mode == SolveMode::kInference) {
    return sinkhorn(cost, u, v, cfg.lambda1, sinkhorn_options(cfg));
  }
  detail::require(teacher.has_value(), "training mode requires ground-truth labels and frozen features");
  detail::require(teacher->y.size() == labels.size(), "label vector length does not match label set");
  detail::require(teacher->frozen_visual.size() == visual.size() &&
                      teacher->frozen_labels.size() == labels.size(),
                  "frozen features must have the same set sizes as the adapted features");
  const TransportPlan target = teacher_plan(teacher->frozen_visual, teacher->frozen_labels, teacher->y, cfg.tau);
  const CostMatrix transformed = transform_cost(cost, target, cfg.lambda2);
  return sinkhorn(transformed, u, v, cfg.lambda1 + cfg.lambda2, sinkhorn_options(cfg));
}

/// Generalized KL divergence sum P log(P / Q) against an unnormalized
/// reference; zero entries of P contribute nothing.
inline double kl_divergence(const Matrix& p, const Matrix& q) {
  detail::require(p.rows() == q.rows() && p.cols() == q.cols(), "KL shape mismatch");
  double kl = 0.0;
  for (Index k = 0; k < p.rows(); ++k) {
    for (Index i = 0; i < p.cols(); ++i) {
      const double x = p(k, i);
      detail::require(x >= 0.0, "KL of a negative entry");
      if (x == 0.0) continue;
      detail::require(q(k, i) > 0.0, "KL reference must be positive where the plan is");
      kl += x * std::log(x / q(k, i));
    }
  }
  return kl;
}

/// sum P C - lambda1 H(P) + lambda2 KL(P || teacher).
inline double kcot_objective(const TransportPlan& plan, const CostMatrix& cost, const TransportPlan& teacher,
                             double lambda1, double lambda2) {
  detail::require(plan.rows() == cost.rows() && plan.cols() == cost.cols(), "plan/cost shape mismatch");
  double value = plan.entries().cwiseProduct(cost.entries()).sum();
  if (lambda1 != 0.0) value -= lambda1 * entropy(plan.entries());
  if (lambda2 != 0.0) value += lambda2 * kl_divergence(plan.entries(), teacher.entries());
  return value;
}

}  // namespace kcot
