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

// Shared numeric containers and validated domain types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace kcot {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

/// A set of d-dimensional embeddings stored one per row.
///
/// The tag separates the visual side of a matching from the label side so the
/// two cannot be swapped by accident. When `l2_normalized` is set, every row is
/// checked to have unit norm within 1e-6.
template <typename Tag>
class EmbeddingSet {
 public:
  static constexpr double kNormTolerance = 1e-6;

  explicit EmbeddingSet(Matrix rows, bool l2_normalized = false)
      : rows_(std::move(rows)), l2_normalized_(l2_normalized) {
    detail::require(rows_.rows() >= 1 && rows_.cols() >= 1,
                    "embedding set must have at least one row and one column");
    detail::require(detail::all_finite(rows_), "embedding set contains non-finite values");
    if (l2_normalized_) {
      for (Index k = 0; k < rows_.rows(); ++k) {
        detail::require(std::abs(rows_.row(k).norm() - 1.0) <= kNormTolerance,
                        "row " + std::to_string(k) + " is flagged normalized but has norm " +
                            std::to_string(rows_.row(k).norm()));
      }
    }
  }

  /// Scales every row to unit length. Zero rows are rejected.
  static EmbeddingSet normalized(Matrix rows) {
    for (Index k = 0; k < rows.rows(); ++k) {
      const double n = rows.row(k).norm();
      detail::require(n > 0.0 && std::isfinite(n),
                      "cannot normalize zero or non-finite row " + std::to_string(k));
      rows.row(k) /= n;
    }
    return EmbeddingSet(std::move(rows), true);
  }

  const Matrix& rows() const { return rows_; }
  Index size() const { return rows_.rows(); }
  Index dim() const { return rows_.cols(); }
  bool l2_normalized() const { return l2_normalized_; }

 private:
  Matrix rows_;
  bool l2_normalized_;
};

struct VisualTag {};
struct LabelTag {};

using FeatureSet = EmbeddingSet<VisualTag>;
using LabelSet = EmbeddingSet<LabelTag>;

/// Dense M x N transport cost. Only finiteness is enforced here; the
/// (0,1) bound holds for costs built from similarities but not for
/// teacher-transformed costs.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries) : entries_(std::move(entries)) {
    detail::require(entries_.rows() >= 1 && entries_.cols() >= 1, "cost matrix must be non-empty");
    detail::require(detail::all_finite(entries_), "cost matrix contains non-finite values");
  }

  const Matrix& entries() const { return entries_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double operator()(Index k, Index i) const { return entries_(k, i); }

 private:
  Matrix entries_;
};

/// Probability vector over one side of a matching.
class Marginal {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit Marginal(Vector weights) : weights_(std::move(weights)) {
    detail::require(weights_.size() >= 1, "marginal must be non-empty");
    detail::require(weights_.allFinite(), "marginal contains non-finite values");
    detail::require((weights_.array() >= 0.0).all(), "marginal has negative entries");
    detail::require(std::abs(weights_.sum() - 1.0) <= kSumTolerance,
                    "marginal sums to " + std::to_string(weights_.sum()) + ", expected 1");
  }

  static Marginal uniform(Index n) {
    detail::require(n >= 1, "uniform marginal needs n >= 1");
    return Marginal(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  const Vector& weights() const { return weights_; }
  Index size() const { return weights_.size(); }
  double operator[](Index k) const { return weights_[k]; }

 private:
  Vector weights_;
};

/// Nonnegative coupling between M regions and N labels.
///
/// Solver output carries the marginals it was solved under together with the
/// achieved residual. Teacher plans carry no marginals and are tagged.
class TransportPlan {
 public:
  explicit TransportPlan(Matrix entries, std::optional<Marginal> source = std::nullopt,
                         std::optional<Marginal> target = std::nullopt, double residual = 0.0,
                         bool is_teacher = false)
      : entries_(std::move(entries)),
        source_(std::move(source)),
        target_(std::move(target)),
        residual_(residual),
        is_teacher_(is_teacher) {
    detail::require(entries_.rows() >= 1 && entries_.cols() >= 1, "plan must be non-empty");
    detail::require(detail::all_finite(entries_), "plan contains non-finite values");
    detail::require((entries_.array() >= 0.0).all(), "plan has negative entries");
    if (source_) {
      detail::require(source_->size() == entries_.rows(), "plan source marginal has wrong length");
    }
    if (target_) {
      detail::require(target_->size() == entries_.cols(), "plan target marginal has wrong length");
    }
  }

  static TransportPlan teacher(Matrix entries) {
    return TransportPlan(std::move(entries), std::nullopt, std::nullopt, 0.0, true);
  }

  const Matrix& entries() const { return entries_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double operator()(Index k, Index i) const { return entries_(k, i); }
  const std::optional<Marginal>& source() const { return source_; }
  const std::optional<Marginal>& target() const { return target_; }
  double residual() const { return residual_; }
  bool is_teacher() const { return is_teacher_; }

  /// Max-norm violation of both marginal constraints, or 0 when unconstrained.
  double marginal_residual() const {
    double r = 0.0;
    if (source_) r = std::max(r, (entries_.rowwise().sum() - source_->weights()).cwiseAbs().maxCoeff());
    if (target_) {
      r = std::max(r, (entries_.colwise().sum().transpose() - target_->weights()).cwiseAbs().maxCoeff());
    }
    return r;
  }

 private:
  Matrix entries_;
  std::optional<Marginal> source_;
  std::optional<Marginal> target_;
  double residual_;
  bool is_teacher_;
};

/// Multi-hot ground truth over N labels.
class LabelVector {
 public:
  explicit LabelVector(std::vector<int> y) : y_(std::move(y)) {
    detail::require(!y_.empty(), "label vector must be non-empty");
    for (int v : y_) detail::require(v == 0 || v == 1, "label vector entries must be 0 or 1");
  }

  const std::vector<int>& values() const { return y_; }
  Index size() const { return static_cast<Index>(y_.size()); }
  bool operator[](Index i) const { return y_[static_cast<std::size_t>(i)] == 1; }
  Index positives() const { return static_cast<Index>(std::count(y_.begin(), y_.end(), 1)); }
  bool has_positive() const { return positives() > 0; }

 private:
  std::vector<int> y_;
};

struct SolverConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.05;
  double tau = 0.01;
  double tau_prime = 0.07;
  int max_iter = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  // Switches Sinkhorn to log-domain updates; needed when lambda1 + lambda2 < 0.01.
  bool log_domain = false;

  void validate() const {
    detail::require(std::isfinite(lambda1) && lambda1 > 0.0, "lambda1 must be > 0");
    detail::require(std::isfinite(lambda2) && lambda2 >= 0.0, "lambda2 must be >= 0");
    detail::require(std::isfinite(tau) && tau > 0.0, "tau must be > 0");
    detail::require(std::isfinite(tau_prime) && tau_prime > 0.0, "tau_prime must be > 0");
    detail::require(max_iter >= 1, "max_iter must be positive");
    detail::require(std::isfinite(tol) && tol > 0.0, "tol must be > 0");
  }
};

/// Pairwise cosine similarities between the rows of `a` and `b`.
template <typename TagA, typename TagB>
Matrix cosine_similarity_matrix(const EmbeddingSet<TagA>& a, const EmbeddingSet<TagB>& b) {
  detail::require(a.dim() == b.dim(), "dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                                          std::to_string(b.dim()));
  const Vector na = a.rows().rowwise().norm();
  const Vector nb = b.rows().rowwise().norm();
  for (Index k = 0; k < na.size(); ++k) {
    detail::require(na[k] > 0.0, "zero-norm row " + std::to_string(k) + " in first set");
  }
  for (Index i = 0; i < nb.size(); ++i) {
    detail::require(nb[i] > 0.0, "zero-norm row " + std::to_string(i) + " in second set");
  }
  Matrix s = a.rows() * b.rows().transpose();
  for (Index k = 0; k < s.rows(); ++k) {
    for (Index i = 0; i < s.cols(); ++i) {
      s(k, i) = std::clamp(s(k, i) / (na[k] * nb[i]), -1.0, 1.0);
    }
  }
  return s;
}

/// softmax(m / tau) applied to each row, with max subtraction.
inline Matrix row_softmax(const Matrix& m, double tau) {
  detail::require(std::isfinite(tau) && tau > 0.0, "softmax temperature must be > 0");
  detail::require(detail::all_finite(m), "softmax input contains non-finite values");
  Matrix out(m.rows(), m.cols());
  for (Index k = 0; k < m.rows(); ++k) {
    const double mx = m.row(k).maxCoeff();
    double z = 0.0;
    for (Index i = 0; i < m.cols(); ++i) {
      out(k, i) = std::exp((m(k, i) - mx) / tau);
      z += out(k, i);
    }
    out.row(k) /= z;
  }
  return out;
}

/// Shannon entropy -sum p log p with 0 log 0 = 0.
inline double entropy(const Matrix& p) {
  double h = 0.0;
  for (Index k = 0; k < p.rows(); ++k) {
    for (Index i = 0; i < p.cols(); ++i) {
      const double x = p(k, i);
      detail::require(x >= 0.0, "entropy of a negative entry");
      if (x > 0.0) h -= x * std::log(x);
    }
  }
  return h;
}

}  // namespace kcot
