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

// Multi-label losses over a batch of logits.
//
// The multi-matching contrastive (MMC) loss treats every positive (sample,
// label) pair as a positive and every logit in the batch as a candidate:
//
//   L = -1/|P| sum_{(b,i) in P} log( exp(s_bi / t) / sum_{b',j} exp(s_b'j / t) )
//
// Its gradient is  dL/ds_bi = (softmax_bi - y_bi / |P|) / t,  where the softmax
// runs over the whole batch. The per-sample variant restricts the
// denominator to sample b's own logits.

#pragma once

#include <cmath>
#include <utility>

#include "kcot/core.hpp"

namespace kcot {

/// B x N logits with their binary ground truth.
class BatchLogits {
 public:
  BatchLogits(Matrix scores, Matrix truth) : s_(std::move(scores)), y_(std::move(truth)) {
    detail::require(s_.rows() >= 1 && s_.cols() >= 1, "batch must be non-empty");
    detail::require(s_.rows() == y_.rows() && s_.cols() == y_.cols(),
                    "logits " + detail::shape_str(s_.rows(), s_.cols()) + " and labels " +
                        detail::shape_str(y_.rows(), y_.cols()) + " differ in shape");
    detail::require(s_.allFinite(), "logits contain non-finite values");
    detail::require(((y_.array() == 0.0) || (y_.array() == 1.0)).all(), "labels must be 0 or 1");
  }

  const Matrix& scores() const { return s_; }
  const Matrix& truth() const { return y_; }
  Index batch() const { return s_.rows(); }
  Index labels() const { return s_.cols(); }
  double positives() const { return y_.sum(); }

 private:
  Matrix s_;
  Matrix y_;
};

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

namespace detail {

inline void check_contrastive(const BatchLogits& batch, double tau_prime) {
  require(std::isfinite(tau_prime) && tau_prime > 0.0, "tau_prime must be > 0");
  require(batch.positives() >= 1.0, "contrastive loss needs at least one positive");
}

// Softmax of block / t with its log partition function.
inline std::pair<Matrix, double> softmax_block(const Matrix& block, double t) {
  const double mx = block.maxCoeff();
  Matrix e = block.unaryExpr([mx, t](double x) { return std::exp((x - mx) / t); });
  const double z = e.sum();
  return {e / z, mx / t + std::log(z)};
}

}  // namespace detail

inline LossAndGrad mmc_loss(const BatchLogits& batch, double tau_prime) {
  detail::check_contrastive(batch, tau_prime);
  const double n_pos = batch.positives();
  auto [soft, log_z] = detail::softmax_block(batch.scores(), tau_prime);
  const double pos_logits = batch.scores().cwiseProduct(batch.truth()).sum() / tau_prime;
  LossAndGrad out;
  out.loss = log_z - pos_logits / n_pos;
  out.grad = (soft - batch.truth() / n_pos) / tau_prime;
  return out;
}

/// Same loss with each positive normalized against its own sample's logits
/// only; still averaged over all |P| positives of the batch.
inline LossAndGrad mmc_loss_no_batch(const BatchLogits& batch, double tau_prime) {
  detail::check_contrastive(batch, tau_prime);
  const double n_pos = batch.positives();
  LossAndGrad out;
  out.grad = Matrix::Zero(batch.batch(), batch.labels());
  for (Index b = 0; b < batch.batch(); ++b) {
    const double row_pos = batch.truth().row(b).sum();
    if (row_pos == 0.0) continue;
    auto [soft, log_z] = detail::softmax_block(batch.scores().row(b), tau_prime);
    const double pos_logits = batch.scores().row(b).dot(batch.truth().row(b)) / tau_prime;
    out.loss += (row_pos * log_z - pos_logits) / n_pos;
    out.grad.row(b) = (row_pos * soft - batch.truth().row(b)) / (n_pos * tau_prime);
  }
  return out;
}

/// Asymmetric focal loss on probabilities in (0, 1):
///   -1/(BN) sum [ y (1-p)^g+ log p + (1-y) p^g- log(1-p) ].
/// The leading minus makes lower values better.
inline double asl_loss(const BatchLogits& batch, double gamma_pos, double gamma_neg) {
  const Matrix& p = batch.scores();
  detail::require(((p.array() > 0.0) && (p.array() < 1.0)).all(), "ASL needs probabilities in (0, 1)");
  detail::require(gamma_pos >= 0.0 && gamma_neg >= 0.0, "focusing exponents must be >= 0");
  double total = 0.0;
  for (Index b = 0; b < p.rows(); ++b) {
    for (Index i = 0; i < p.cols(); ++i) {
      const double x = p(b, i);
      if (batch.truth()(b, i) == 1.0) {
        total += std::pow(1.0 - x, gamma_pos) * std::log(x);
      } else {
        total += std::pow(x, gamma_neg) * std::log1p(-x);
      }
    }
  }
  return -total / static_cast<double>(p.size());
}

/// Sum over samples of max(1 + s_neg - s_pos, 0) over all positive/negative
/// label pairs. Samples without both kinds contribute nothing.
inline double ranking_loss(const BatchLogits& batch) {
  const Matrix& s = batch.scores();
  const Matrix& y = batch.truth();
  double total = 0.0;
  for (Index b = 0; b < s.rows(); ++b) {
    for (Index i = 0; i < s.cols(); ++i) {
      if (y(b, i) != 1.0) continue;
      for (Index j = 0; j < s.cols(); ++j) {
        if (y(b, j) == 1.0) continue;
        total += std::max(1.0 + s(b, j) - s(b, i), 0.0);
      }
    }
  }
  return total;
}

/// MMC on plan-aggregated local scores plus MMC on global scores.
inline LossAndGrad training_objective(const Matrix& local_scores, const Matrix& global_scores,
                                      const Matrix& truth, double tau_prime) {
  detail::require(local_scores.rows() == global_scores.rows() && local_scores.cols() == global_scores.cols(),
                  "local and global score batches differ in shape");
  const LossAndGrad local = mmc_loss(BatchLogits(local_scores, truth), tau_prime);
  const LossAndGrad global = mmc_loss(BatchLogits(global_scores, truth), tau_prime);
  // Gradients are stacked local-then-global since the streams are separate inputs.
  LossAndGrad out;
  out.loss = local.loss + global.loss;
  out.grad.resize(2 * truth.rows(), truth.cols());
  out.grad << local.grad, global.grad;
  return out;
}

}  // namespace kcot
