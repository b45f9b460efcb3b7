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

// Entropic optimal transport by Sinkhorn scaling.
//
// Solves  min_P <P, C> - lambda H(P)  s.t.  P 1 = u,  P^T 1 = v
// with the alternating updates
//
//   a = u / (K b),   b = v / (K^T a),   K = exp(-C / lambda),   b_0 = 1,
//
// and returns P = diag(a) K diag(b). Iteration stops once the larger of the
// two marginal violations (max norm) is at most `tol`, or after `max_iter`
// sweeps. The log-domain variant runs the same recursion on log a and log b
// and is meant for lambda < 0.01, where K underflows.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "kcot/core.hpp"
#include "kcot/parallel.hpp"

namespace kcot {

class RegularizationUnderflow : public Error {
 public:
  using Error::Error;
};

struct SinkhornOptions {
  int max_iter = 100;
  double tol = 1e-6;
  bool log_domain = false;
};

struct SolveReport {
  TransportPlan plan;
  int iterations_used = 0;
  double final_marginal_residual = 0.0;
  bool converged = false;
  /// <P, C> - lambda H(P) on the cost that was solved.
  double objective = 0.0;
  double lambda = 0.0;
  bool log_domain = false;
  // Final scalings. The plain ones are empty for log-domain solves, whose
  // scalings routinely overflow.
  Vector scaling_a;
  Vector scaling_b;
  Vector log_scaling_a;
  Vector log_scaling_b;
};

/// <P, C> - lambda H(P).
inline double entropic_objective(const Matrix& plan, const Matrix& cost, double lambda) {
  detail::require(plan.rows() == cost.rows() && plan.cols() == cost.cols(), "plan/cost shape mismatch");
  return plan.cwiseProduct(cost).sum() - lambda * entropy(plan);
}

namespace detail {

inline void check_problem(const CostMatrix& c, const Marginal& u, const Marginal& v, double lambda,
                          const SinkhornOptions& opt) {
  require(std::isfinite(lambda) && lambda > 0.0, "regularization lambda must be > 0");
  require(u.size() == c.rows(), "source marginal length " + std::to_string(u.size()) +
                                    " does not match cost rows " + std::to_string(c.rows()));
  require(v.size() == c.cols(), "target marginal length " + std::to_string(v.size()) +
                                    " does not match cost cols " + std::to_string(c.cols()));
  require(opt.max_iter >= 1, "max_iter must be positive");
  require(std::isfinite(opt.tol) && opt.tol > 0.0, "tol must be > 0");
}

[[noreturn]] inline void throw_underflow(double lambda) {
  throw RegularizationUnderflow("exp(-C/lambda) underflows at lambda = " + std::to_string(lambda) +
                                "; use the log-domain solver");
}

inline SolveReport finish(Matrix p, const CostMatrix& c, const Marginal& u, const Marginal& v,
                          double lambda, int iters, double tol) {
  TransportPlan plan(std::move(p), u, v);
  const double residual = plan.marginal_residual();
  const double objective = entropic_objective(plan.entries(), c.entries(), lambda);
  TransportPlan stamped(plan.entries(), u, v, residual);
  return SolveReport{std::move(stamped), iters, residual, residual <= tol, objective, lambda, false, {}, {}, {}, {}};
}

inline SolveReport sinkhorn_standard(const CostMatrix& c, const Marginal& u, const Marginal& v,
                                     double lambda, const SinkhornOptions& opt) {
  const Index m = c.rows();
  const Index n = c.cols();
  // Scalar std::exp: Eigen's packet exp clamps its argument, which would turn
  // a fully underflowed kernel into ~1e-308 instead of 0.
  const Matrix kernel = c.entries().unaryExpr([lambda](double x) { return std::exp(-x / lambda); });
  for (Index k = 0; k < m; ++k) {
    if (u[k] > 0.0 && kernel.row(k).maxCoeff() == 0.0) throw_underflow(lambda);
  }
  for (Index i = 0; i < n; ++i) {
    if (v[i] > 0.0 && kernel.col(i).maxCoeff() == 0.0) throw_underflow(lambda);
  }

  const Vector& uw = u.weights();
  const Vector& vw = v.weights();
  Vector a = Vector::Zero(m);
  Vector b = Vector::Ones(n);
  int iters = 0;
  for (int t = 1; t <= opt.max_iter; ++t) {
    iters = t;
    const Vector kb = kernel * b;
    for (Index k = 0; k < m; ++k) a[k] = uw[k] > 0.0 ? uw[k] / kb[k] : 0.0;
    const Vector kta = kernel.transpose() * a;
    for (Index i = 0; i < n; ++i) b[i] = vw[i] > 0.0 ? vw[i] / kta[i] : 0.0;
    if (!a.allFinite() || !b.allFinite()) throw_underflow(lambda);

    // Columns are exact after the b update; only the rows can drift.
    const double row_residual = (a.cwiseProduct(kernel * b) - uw).cwiseAbs().maxCoeff();
    if (row_residual <= opt.tol) break;
  }

  Matrix p = a.asDiagonal() * kernel * b.asDiagonal();
  SolveReport r = finish(std::move(p), c, u, v, lambda, iters, opt.tol);
  r.scaling_a = a;
  r.scaling_b = b;
  r.log_scaling_a = a.array().log().matrix();
  r.log_scaling_b = b.array().log().matrix();
  return r;
}

inline double log_sum_exp(const double* x, Index n, Index stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < n; ++j) mx = std::max(mx, x[j * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (Index j = 0; j < n; ++j) s += std::exp(x[j * stride] - mx);
  return mx + std::log(s);
}

inline SolveReport sinkhorn_log(const CostMatrix& c, const Marginal& u, const Marginal& v,
                                double lambda, const SinkhornOptions& opt) {
  const Index m = c.rows();
  const Index n = c.cols();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const Matrix log_kernel = (-c.entries().array() / lambda).matrix();
  const Vector log_u = u.weights().array().log().matrix();
  const Vector log_v = v.weights().array().log().matrix();

  Vector log_a = Vector::Zero(m);
  Vector log_b = Vector::Zero(n);
  Matrix work(m, n);
  std::vector<double> column(static_cast<std::size_t>(m));

  auto update_a = [&] {
    for (Index k = 0; k < m; ++k) {
      if (log_u[k] == neg_inf) {
        log_a[k] = neg_inf;
        continue;
      }
      for (Index i = 0; i < n; ++i) work(k, i) = log_kernel(k, i) + log_b[i];
      log_a[k] = log_u[k] - log_sum_exp(&work(k, 0), n, 1);
    }
  };
  auto update_b = [&] {
    for (Index i = 0; i < n; ++i) {
      if (log_v[i] == neg_inf) {
        log_b[i] = neg_inf;
        continue;
      }
      for (Index k = 0; k < m; ++k) column[static_cast<std::size_t>(k)] = log_kernel(k, i) + log_a[k];
      log_b[i] = log_v[i] - log_sum_exp(column.data(), m, 1);
    }
  };
  auto row_residual = [&] {
    double r = 0.0;
    for (Index k = 0; k < m; ++k) {
      double s = 0.0;
      if (log_a[k] != neg_inf) {
        for (Index i = 0; i < n; ++i) s += std::exp(log_a[k] + log_kernel(k, i) + log_b[i]);
      }
      r = std::max(r, std::abs(s - u[k]));
    }
    return r;
  };

  int iters = 0;
  for (int t = 1; t <= opt.max_iter; ++t) {
    iters = t;
    update_a();
    update_b();
    if (row_residual() <= opt.tol) break;
  }

  Matrix p(m, n);
  for (Index k = 0; k < m; ++k) {
    for (Index i = 0; i < n; ++i) {
      const double e = log_a[k] + log_kernel(k, i) + log_b[i];
      p(k, i) = std::isnan(e) ? 0.0 : std::exp(e);
    }
  }
  if (!p.allFinite()) throw Error("log-domain Sinkhorn produced non-finite plan entries");
  SolveReport r = finish(std::move(p), c, u, v, lambda, iters, opt.tol);
  r.log_domain = true;
  r.log_scaling_a = log_a;
  r.log_scaling_b = log_b;
  return r;
}

}  // namespace detail

inline SolveReport sinkhorn(const CostMatrix& cost, const Marginal& u, const Marginal& v, double lambda,
                            const SinkhornOptions& opt = {}) {
  detail::check_problem(cost, u, v, lambda, opt);
  return opt.log_domain ? detail::sinkhorn_log(cost, u, v, lambda, opt)
                        : detail::sinkhorn_standard(cost, u, v, lambda, opt);
}

/// diag(a) exp(-C / lambda) diag(b) from the scalings stored in `report`.
inline Matrix reconstruct_plan(const CostMatrix& cost, const SolveReport& report) {
  const Index m = cost.rows();
  const Index n = cost.cols();
  Matrix p(m, n);
  for (Index k = 0; k < m; ++k) {
    for (Index i = 0; i < n; ++i) {
      if (report.log_domain) {
        const double e = report.log_scaling_a[k] - cost(k, i) / report.lambda + report.log_scaling_b[i];
        p(k, i) = std::isnan(e) ? 0.0 : std::exp(e);
      } else {
        p(k, i) = report.scaling_a[k] * std::exp(-cost(k, i) / report.lambda) * report.scaling_b[i];
      }
    }
  }
  return p;
}

struct SinkhornProblem {
  CostMatrix cost;
  Marginal u;
  Marginal v;
  double lambda;
  SinkhornOptions options;
};

/// Solves independent problems on up to `threads` workers. Results are in
/// input order and identical to solving them one by one.
inline std::vector<SolveReport> sinkhorn_batch(std::span<const SinkhornProblem> problems,
                                               std::size_t threads = default_thread_count()) {
  std::vector<std::optional<SolveReport>> slots(problems.size());
  parallel_for(problems.size(), threads, [&](std::size_t j) {
    const SinkhornProblem& p = problems[j];
    slots[j] = sinkhorn(p.cost, p.u, p.v, p.lambda, p.options);
  });
  std::vector<SolveReport> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace kcot
