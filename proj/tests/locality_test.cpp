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

#include "kcot/locality.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"

namespace kcot {
namespace {

using testing::random_matrix;
using testing::random_unit_rows;

TssWeights random_weights(SceneRng& rng, Index d, Index k) {
  return TssWeights(random_matrix(rng, 9 * d, d, -0.3, 0.3), random_matrix(rng, d, d, -0.3, 0.3),
                    random_matrix(rng, 2, k * k, -1.0, 1.0));
}

// Attention over rows of a matrix, one dot product at a time.
Matrix naive_attend(const Matrix& q, const Matrix& kv, long double scale) {
  Matrix out = Matrix::Zero(q.rows(), kv.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    std::vector<long double> logits(static_cast<std::size_t>(kv.rows()));
    for (Index j = 0; j < kv.rows(); ++j) {
      long double dot = 0;
      for (Index c = 0; c < q.cols(); ++c) dot += static_cast<long double>(q(i, c)) * kv(j, c);
      logits[static_cast<std::size_t>(j)] = dot / scale;
    }
    const auto w = testing::naive_softmax(logits, 1);
    for (Index c = 0; c < kv.cols(); ++c) {
      long double acc = 0;
      for (Index j = 0; j < kv.rows(); ++j) acc += w[static_cast<std::size_t>(j)] * kv(j, c);
      out(i, c) = static_cast<double>(acc);
    }
  }
  return out;
}

// Straightforward HxWxC re-implementation of the semantic-selection block.
Matrix naive_tss(const Matrix& x, const Matrix& t, const TssWeights& w, Index h, Index wd, Vector* mask_out) {
  const Index d = x.cols();
  auto at = [&](Index y, Index xx, Index c) { return x(y * wd + xx, c); };
  Matrix conv3 = Matrix::Zero(h * wd, d);
  Matrix conv1 = Matrix::Zero(h * wd, d);
  for (Index y = 0; y < h; ++y) {
    for (Index xx = 0; xx < wd; ++xx) {
      for (Index co = 0; co < d; ++co) {
        long double acc3 = 0;
        long double acc1 = 0;
        for (Index ci = 0; ci < d; ++ci) {
          acc1 += static_cast<long double>(at(y, xx, ci)) * w.conv1()(ci, co);
          for (Index ky = -1; ky <= 1; ++ky) {
            for (Index kx = -1; kx <= 1; ++kx) {
              const Index sy = y + ky;
              const Index sx = xx + kx;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              acc3 += static_cast<long double>(at(sy, sx, ci)) * w.conv3()(((ky + 1) * 3 + (kx + 1)) * d + ci, co);
            }
          }
        }
        conv3(y * wd + xx, co) = static_cast<double>(acc3);
        conv1(y * wd + xx, co) = static_cast<double>(acc1);
      }
    }
  }
  const long double scale = std::sqrt(static_cast<long double>(d));
  const Matrix a = naive_attend(conv3, t, scale);
  const Matrix b = naive_attend(conv1, t, scale);
  std::vector<long double> mx(static_cast<std::size_t>(h * wd));
  std::vector<long double> mean(static_cast<std::size_t>(h * wd));
  for (Index p = 0; p < h * wd; ++p) {
    long double m = a(p, 0);
    long double s = 0;
    for (Index c = 0; c < d; ++c) {
      m = std::max<long double>({m, a(p, c), b(p, c)});
      s += static_cast<long double>(a(p, c)) + b(p, c);
    }
    mx[static_cast<std::size_t>(p)] = m;
    mean[static_cast<std::size_t>(p)] = s / static_cast<long double>(2 * d);
  }
  const Index k = w.kernel();
  const Index r = k / 2;
  Vector mask(h * wd);
  Matrix out(h * wd, d);
  for (Index y = 0; y < h; ++y) {
    for (Index xx = 0; xx < wd; ++xx) {
      long double logit = 0;
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          const Index sy = y + ky - r;
          const Index sx = xx + kx - r;
          if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
          const auto src = static_cast<std::size_t>(sy * wd + sx);
          logit += w.depthwise()(0, ky * k + kx) * mx[src] + w.depthwise()(1, ky * k + kx) * mean[src];
        }
      }
      const long double g = 1 / (1 + std::exp(-logit));
      mask[y * wd + xx] = static_cast<double>(g);
      for (Index c = 0; c < d; ++c) out(y * wd + xx, c) = static_cast<double>(g * at(y, xx, c));
    }
  }
  if (mask_out) *mask_out = mask;
  return out;
}

TEST(Saa, SingleTokenIsIdentity) {
  Matrix v(1, 3);
  v << 0.3, -1.2, 2.0;
  EXPECT_EQ(saa_attention(v)(0, 0), 1.0);
  EXPECT_EQ(saa(v), v);
}

TEST(Saa, OrthonormalRowsAtUnitScale) {
  const Matrix v = Matrix::Identity(4, 4);
  const Matrix a = saa_attention(v, 1.0);
  const double e = std::exp(1.0);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) EXPECT_NEAR(a(i, j), (i == j ? e : 1.0) / (e + 3.0), 1e-15);
  }
  EXPECT_LE((saa(v, 1.0) - a).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Saa, MatchesNaiveAttention) {
  SceneRng rng(91);
  const Matrix v = random_unit_rows(rng, 4, 6);
  EXPECT_LE((saa(v) - naive_attend(v, v, std::sqrt(6.0L))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Saa, EqualNormRowsAttendToThemselvesMost) {
  SceneRng rng(92);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = testing::random_index(rng, 2, 16);
    const Index d = testing::random_index(rng, 2, 8);
    const double norm = 0.1 + 3.0 * rng.uniform();
    const Matrix v = random_unit_rows(rng, m, d) * norm;
    const Matrix a = saa_attention(v);
    for (Index i = 0; i < m; ++i) {
      Index best = 0;
      a.row(i).maxCoeff(&best);
      EXPECT_EQ(best, i) << "trial " << trial;
    }
  }
}

TEST(Saa, TokenPermutationEquivariant) {
  SceneRng rng(93);
  const Matrix v = random_matrix(rng, 5, 3);
  const std::vector<Index> perm = {2, 4, 0, 1, 3};
  Matrix vp(5, 3);
  for (Index i = 0; i < 5; ++i) vp.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
  const Matrix out = saa(v);
  const Matrix outp = saa(vp);
  for (Index i = 0; i < 5; ++i) {
    EXPECT_LE((outp.row(i) - out.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Saa, Errors) {
  EXPECT_THROW(saa(Matrix(0, 2)), Error);
  EXPECT_THROW(saa(Matrix::Ones(2, 2), 0.0), Error);
}

TEST(TssWeights, ValidatesShapes) {
  EXPECT_THROW(TssWeights(Matrix::Zero(9, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 9)), Error);
  EXPECT_THROW(TssWeights(Matrix::Zero(18, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 4)), Error);
  EXPECT_THROW(TssWeights(Matrix::Zero(18, 2), Matrix::Zero(2, 2), Matrix::Zero(1, 9)), Error);
  const TssWeights w(Matrix::Zero(18, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 25));
  EXPECT_EQ(w.kernel(), 5);
  EXPECT_EQ(w.dim(), 2);
}

TEST(TssWeights, LoadRoundTrip) {
  SceneRng rng(94);
  const TssWeights w = random_weights(rng, 3, 3);
  const auto dir = testing::temp_dir("tss_weights");
  write_matrix(dir / "conv3.bin", w.conv3());
  write_matrix(dir / "conv1.csv", w.conv1());
  write_matrix(dir / "dw.csv", w.depthwise());
  const TssWeights back = TssWeights::load(dir / "conv3.bin", dir / "conv1.csv", dir / "dw.csv");
  EXPECT_EQ(back.conv3(), w.conv3());
  EXPECT_EQ(back.conv1(), w.conv1());
  EXPECT_EQ(back.depthwise(), w.depthwise());
}

TEST(Tss, ZeroDepthwiseHalvesInput) {
  SceneRng rng(95);
  const Index d = 4;
  const TssWeights w(random_matrix(rng, 9 * d, d), random_matrix(rng, d, d), Matrix::Zero(2, 9));
  const Matrix x = random_matrix(rng, 6, d);
  const Matrix t = random_matrix(rng, 3, d);
  EXPECT_EQ(tss_forward(x, t, w, 2, 3), x / 2.0);
}

// A 1x1 depthwise tap on the mean map only, with zero convolutions: every
// token attends to the same uniform label mixture, so the mask is constant.
TEST(Tss, UniformLabelsGiveConstantMask) {
  SceneRng rng(96);
  const Index d = 5;
  Matrix dw(2, 1);
  dw << 0.7, -1.3;
  const TssWeights w(Matrix::Zero(9 * d, d), Matrix::Zero(d, d), dw);
  const Matrix x = random_matrix(rng, 9, d);
  const Matrix t = Matrix::Constant(2, d, 0.4);
  const TssTrace tr = tss_forward_trace(x, t, w, 3, 3);
  EXPECT_LE((tr.mask.array() - tr.mask[0]).abs().maxCoeff(), 1e-15);
  const double logit = 0.7 * 0.4 - 1.3 * 0.4;
  EXPECT_NEAR(tr.mask[0], 1.0 / (1.0 + std::exp(-logit)), 1e-15);
  EXPECT_LE((tr.output - tr.mask[0] * x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Tss, MatchesNestedLoopOracle) {
  SceneRng rng(97);
  for (Index k : {1, 3, 5}) {
    const TssWeights w = random_weights(rng, 8, k);
    const Matrix x = random_matrix(rng, 16, 8);
    const Matrix t = random_unit_rows(rng, 5, 8);
    Vector mask;
    const Matrix expect = naive_tss(x, t, w, 4, 4, &mask);
    const TssTrace tr = tss_forward_trace(x, t, w, 4, 4);
    EXPECT_LE((tr.output - expect).cwiseAbs().maxCoeff(), 1e-13) << "k " << k;
    EXPECT_LE((tr.mask - mask).cwiseAbs().maxCoeff(), 1e-13) << "k " << k;
    EXPECT_EQ(tss_forward(x, t, w), tr.output);
  }
}

TEST(Tss, NonSquareMap) {
  SceneRng rng(98);
  const TssWeights w = random_weights(rng, 3, 3);
  const Matrix x = random_matrix(rng, 6, 3);
  const Matrix t = random_matrix(rng, 2, 3);
  EXPECT_LE((tss_forward(x, t, w, 2, 3) - naive_tss(x, t, w, 2, 3, nullptr)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(tss_forward(x, t, w), Error);
}

TEST(Tss, MaskStaysInOpenUnitInterval) {
  SceneRng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const TssWeights w = random_weights(rng, 4, 3);
    const Matrix x = random_matrix(rng, 9, 4, -5.0, 5.0);
    const TssTrace tr = tss_forward_trace(x, random_matrix(rng, 3, 4), w, 3, 3);
    EXPECT_GT(tr.mask.minCoeff(), 0.0);
    EXPECT_LT(tr.mask.maxCoeff(), 1.0);
  }
}

TEST(Tss, ShapeErrors) {
  SceneRng rng(100);
  const TssWeights w = random_weights(rng, 3, 3);
  EXPECT_THROW(tss_forward(random_matrix(rng, 6, 3), random_matrix(rng, 2, 3), w, 2, 2), Error);
  EXPECT_THROW(tss_forward(random_matrix(rng, 4, 4), random_matrix(rng, 2, 4), w, 2, 2), Error);
  EXPECT_THROW(tss_forward(random_matrix(rng, 4, 3), random_matrix(rng, 2, 4), w, 2, 2), Error);
}

TEST(Lla, AveragesBranchesOntoResidual) {
  SceneRng rng(101);
  const TssWeights w = random_weights(rng, 4, 3);
  const Matrix prev = random_matrix(rng, 9, 4);
  const Matrix x = random_matrix(rng, 9, 4);
  const Matrix t = random_matrix(rng, 3, 4);
  const Matrix expect = prev + 0.5 * (saa(x) + tss_forward(x, t, w, 3, 3));
  EXPECT_EQ(lla_layer(prev, x, t, w, 3, 3), expect);
}

TEST(Lla, ClosedMaskLeavesHalfAttention) {
  SceneRng rng(102);
  const Index d = 4;
  // Nonnegative labels keep the max map positive, so a large negative tap
  // drives the mask to zero.
  Matrix dw = Matrix::Zero(2, 1);
  dw(0, 0) = -1e4;
  const TssWeights w(Matrix::Zero(9 * d, d), Matrix::Identity(d, d), dw);
  const Matrix x = random_matrix(rng, 4, d);
  const Matrix t = random_matrix(rng, 3, d, 0.5, 1.0);
  const Matrix out = lla_layer(Matrix::Zero(4, d), x, t, w, 2, 2);
  EXPECT_LE((out - 0.5 * saa(x)).cwiseAbs().maxCoeff(), 1e-300);
}

TEST(Lla, LadderComposesLayers) {
  SceneRng rng(103);
  std::vector<Matrix> layers;
  std::vector<TssWeights> weights;
  for (int l = 0; l < 3; ++l) {
    layers.push_back(random_matrix(rng, 9, 4));
    weights.push_back(random_weights(rng, 4, 3));
  }
  const Matrix t = random_matrix(rng, 3, 4);
  const Matrix init = random_matrix(rng, 9, 4);
  Matrix state = init;
  for (int l = 0; l < 3; ++l) {
    const Matrix& x = layers[static_cast<std::size_t>(l)];
    state = state + 0.5 * (naive_attend(x, x, 2.0L) + naive_tss(x, t, weights[static_cast<std::size_t>(l)], 3, 3, nullptr));
  }
  EXPECT_LE((lla_ladder(init, layers, t, weights, 3, 3) - state).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(lla_ladder(init, layers, t, {}, 3, 3), Error);
  EXPECT_THROW(lla_layer(Matrix::Zero(4, 4), layers[0], t, weights[0], 3, 3), Error);
}

}  // namespace
}  // namespace kcot
