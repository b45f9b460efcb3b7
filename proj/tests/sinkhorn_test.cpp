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

#include "kcot/sinkhorn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"

namespace kcot {
namespace {

using testing::random_index;
using testing::random_matrix;
using testing::random_simplex;

struct Instance {
  CostMatrix cost;
  Marginal u;
  Marginal v;
  double lambda;
};

Instance random_instance(SceneRng& rng, Index max_side) {
  const Index m = random_index(rng, 1, max_side);
  const Index n = random_index(rng, 1, max_side);
  return {CostMatrix(random_matrix(rng, m, n, 0.0, 1.0)), Marginal(random_simplex(rng, m)),
          Marginal(random_simplex(rng, n)), 0.05 + rng.uniform()};
}

// Alternating row/column rescaling of a positive matrix onto the marginals.
Matrix project_to_marginals(Matrix p, const Vector& u, const Vector& v) {
  for (int t = 0; t < 100000; ++t) {
    for (Index k = 0; k < p.rows(); ++k) p.row(k) *= u[k] / p.row(k).sum();
    for (Index i = 0; i < p.cols(); ++i) p.col(i) *= v[i] / p.col(i).sum();
    double r = 0.0;
    for (Index k = 0; k < p.rows(); ++k) r = std::max(r, std::abs(p.row(k).sum() - u[k]));
    if (r < 1e-14) break;
  }
  return p;
}

TEST(Sinkhorn, ConstantCostGivesOuterProduct) {
  SceneRng rng(51);
  const Vector u = random_simplex(rng, 4);
  const Vector v = random_simplex(rng, 3);
  const SolveReport r = sinkhorn(CostMatrix(Matrix::Constant(4, 3, 0.7)), Marginal(u), Marginal(v), 0.1);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((r.plan.entries() - u * v.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sinkhorn, SingletonPlan) {
  const SolveReport r = sinkhorn(CostMatrix(Matrix::Constant(1, 1, 0.3)), Marginal::uniform(1), Marginal::uniform(1), 0.1);
  EXPECT_NEAR(r.plan(0, 0), 1.0, 1e-15);
  EXPECT_TRUE(r.converged);
}

// Symmetric 2x2 fixed point: a = b, a^2 (1 + e^-10) = 1/2, so the diagonal is
// 1 / (2 (1 + e^-10)) = 0.4999773... and the off-diagonal e^-10 times that.
TEST(Sinkhorn, ClosedFormTwoByTwo) {
  Matrix c(2, 2);
  c << 0.0, 1.0, 1.0, 0.0;
  SinkhornOptions opt;
  opt.tol = 1e-14;
  opt.max_iter = 1000;
  const SolveReport r = sinkhorn(CostMatrix(c), Marginal::uniform(2), Marginal::uniform(2), 0.1, opt);
  const double diag = 0.4999773010656488;
  const double off = 2.2698934351217197e-05;
  EXPECT_NEAR(diag, 0.5 / (1.0 + std::exp(-10.0)), 1e-16);
  EXPECT_NEAR(r.plan(0, 0), diag, 1e-15);
  EXPECT_NEAR(r.plan(1, 1), diag, 1e-15);
  EXPECT_NEAR(r.plan(0, 1), off, 1e-15);
  EXPECT_NEAR(r.plan(1, 0), off, 1e-15);
}

TEST(Sinkhorn, ConvergedPlansAreFeasibleAndReconstructible) {
  SceneRng rng(52);
  SinkhornOptions opt;
  opt.max_iter = 5000;
  for (int trial = 0; trial < 40; ++trial) {
    const Instance in = random_instance(rng, 12);
    const SolveReport r = sinkhorn(in.cost, in.u, in.v, in.lambda, opt);
    ASSERT_TRUE(r.converged) << "trial " << trial;
    EXPECT_LE(r.iterations_used, opt.max_iter);
    const Matrix& p = r.plan.entries();
    EXPECT_LE((p.rowwise().sum() - in.u.weights()).cwiseAbs().maxCoeff(), opt.tol);
    EXPECT_LE((p.colwise().sum().transpose() - in.v.weights()).cwiseAbs().maxCoeff(), opt.tol);
    EXPECT_LE(r.final_marginal_residual, opt.tol);
    EXPECT_LE((reconstruct_plan(in.cost, r) - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Sinkhorn, ReportsNonConvergence) {
  SceneRng rng(53);
  SinkhornOptions opt;
  opt.max_iter = 1;
  opt.tol = 1e-15;
  const SolveReport r = sinkhorn(CostMatrix(random_matrix(rng, 6, 5, 0.0, 1.0)), Marginal(random_simplex(rng, 6)),
                                 Marginal(random_simplex(rng, 5)), 0.05, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations_used, 1);
  EXPECT_GT(r.final_marginal_residual, opt.tol);
}

TEST(Sinkhorn, BeatsEveryFeasibleCompetitor) {
  SceneRng rng(54);
  SinkhornOptions opt;
  opt.tol = 1e-12;
  opt.max_iter = 100000;
  const Index m = 5;
  const Index n = 4;
  const CostMatrix c(random_matrix(rng, m, n, 0.0, 1.0));
  const Vector u = random_simplex(rng, m);
  const Vector v = random_simplex(rng, n);
  const double lambda = 0.2;
  const SolveReport r = sinkhorn(c, Marginal(u), Marginal(v), lambda, opt);
  ASSERT_TRUE(r.converged);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix q = project_to_marginals(random_matrix(rng, m, n, 0.01, 1.0), u, v);
    EXPECT_LE(r.objective, entropic_objective(q, c.entries(), lambda) + 1e-10) << "trial " << trial;
  }
}

TEST(Sinkhorn, ObjectiveMatchesPlan) {
  SceneRng rng(55);
  const Instance in = random_instance(rng, 6);
  const SolveReport r = sinkhorn(in.cost, in.u, in.v, in.lambda);
  EXPECT_NEAR(r.objective, entropic_objective(r.plan.entries(), in.cost.entries(), in.lambda), 1e-15);
}

TEST(Sinkhorn, DeterministicForFixedInputs) {
  SceneRng rng(56);
  const Instance in = random_instance(rng, 10);
  const SolveReport a = sinkhorn(in.cost, in.u, in.v, in.lambda);
  const SolveReport b = sinkhorn(in.cost, in.u, in.v, in.lambda);
  EXPECT_EQ(a.plan.entries(), b.plan.entries());
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST(Sinkhorn, LogDomainAgreesWithStandard) {
  SceneRng rng(57);
  SinkhornOptions opt;
  opt.max_iter = 5000;
  opt.tol = 1e-12;
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(rng, 8);
    const SolveReport a = sinkhorn(in.cost, in.u, in.v, in.lambda, opt);
    SinkhornOptions log_opt = opt;
    log_opt.log_domain = true;
    const SolveReport b = sinkhorn(in.cost, in.u, in.v, in.lambda, log_opt);
    EXPECT_TRUE(b.log_domain);
    EXPECT_LE((a.plan.entries() - b.plan.entries()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((reconstruct_plan(in.cost, b) - b.plan.entries()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Sinkhorn, UnderflowIsReportedAndLogDomainRecovers) {
  Matrix c(2, 2);
  c << 0.9, 1.0, 0.95, 0.8;
  EXPECT_THROW(sinkhorn(CostMatrix(c), Marginal::uniform(2), Marginal::uniform(2), 1e-4), RegularizationUnderflow);
  SinkhornOptions opt;
  opt.log_domain = true;
  opt.max_iter = 1000;
  const SolveReport r = sinkhorn(CostMatrix(c), Marginal::uniform(2), Marginal::uniform(2), 1e-4, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.plan.entries().allFinite());
}

TEST(Sinkhorn, ZeroMarginalEntriesAreRespected) {
  Vector u(3);
  u << 0.5, 0.0, 0.5;
  SceneRng rng(58);
  const SolveReport r = sinkhorn(CostMatrix(random_matrix(rng, 3, 2, 0.0, 1.0)), Marginal(u), Marginal::uniform(2), 0.1);
  EXPECT_EQ(r.plan.entries().row(1).sum(), 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(Sinkhorn, InputErrors) {
  const CostMatrix c(Matrix::Zero(2, 3));
  EXPECT_THROW(sinkhorn(c, Marginal::uniform(2), Marginal::uniform(3), 0.0), Error);
  EXPECT_THROW(sinkhorn(c, Marginal::uniform(3), Marginal::uniform(3), 0.1), Error);
  SinkhornOptions opt;
  opt.max_iter = 0;
  EXPECT_THROW(sinkhorn(c, Marginal::uniform(2), Marginal::uniform(3), 0.1, opt), Error);
}

TEST(Sinkhorn, BatchMatchesSequential) {
  SceneRng rng(59);
  std::vector<SinkhornProblem> problems;
  for (int j = 0; j < 24; ++j) {
    Instance in = random_instance(rng, 16);
    problems.push_back({in.cost, in.u, in.v, in.lambda, SinkhornOptions{500, 1e-9, j % 2 == 1}});
  }
  const std::vector<SolveReport> par = sinkhorn_batch(problems, 4);
  ASSERT_EQ(par.size(), problems.size());
  for (std::size_t j = 0; j < problems.size(); ++j) {
    const SinkhornProblem& p = problems[j];
    const SolveReport seq = sinkhorn(p.cost, p.u, p.v, p.lambda, p.options);
    EXPECT_EQ(par[j].plan.entries(), seq.plan.entries());
    EXPECT_EQ(par[j].iterations_used, seq.iterations_used);
  }
}

}  // namespace
}  // namespace kcot
