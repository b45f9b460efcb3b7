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

// Locality recovery for token features: parameter-free self-aware attention
// (SAA) and a forward-only text-guided spatial selection (TSS) branch.
//
// Token matrices are M x d with tokens in row-major spatial order, so token
// (y, x) of an H x W map is row y * W + x.
//
// TSS forward, with all convolutions zero-padded to keep the spatial size:
//   A = conv3x3(X), B = conv1x1(X)
//   A' = softmax(A T^T / sqrt(d)) T, B' likewise      (per token, over labels)
//   pool = [max_c, mean_c] over the 2d channels of [A' | B']
//   mask = sigmoid(sum_c depthwise_k(pool_c))          (no bias)
//   out = mask * X                                     (per token)

#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <vector>

#include "kcot/core.hpp"
#include "kcot/matrix_io.hpp"

namespace kcot {

/// Attention matrix softmax(V V^T / scale); scale defaults to sqrt(d).
inline Matrix saa_attention(const Matrix& v, std::optional<double> scale = std::nullopt) {
  detail::require(v.rows() >= 1 && v.cols() >= 1, "SAA needs a non-empty token matrix");
  detail::require(v.allFinite(), "SAA input contains non-finite values");
  const double s = scale.value_or(std::sqrt(static_cast<double>(v.cols())));
  detail::require(std::isfinite(s) && s > 0.0, "SAA scale must be > 0");
  const Matrix gram = v * v.transpose();
  return row_softmax(gram / s, 1.0);
}

inline Matrix saa(const Matrix& v, std::optional<double> scale = std::nullopt) {
  return saa_attention(v, scale) * v;
}

/// Convolution weights for one TSS block.
///   conv3: (9 d) x d, row (ky * 3 + kx) * d + c_in, column c_out
///   conv1: d x d, row c_in, column c_out
///   depthwise: 2 x (k k), row 0 for the max map and row 1 for the mean map,
///              taps in row-major (ky, kx) order; k odd
class TssWeights {
 public:
  TssWeights(Matrix conv3, Matrix conv1, Matrix depthwise)
      : conv3_(std::move(conv3)), conv1_(std::move(conv1)), depthwise_(std::move(depthwise)) {
    const Index d = conv1_.rows();
    detail::require(d >= 1 && conv1_.cols() == d,
                    "conv1 must be d x d, got " + detail::shape_str(conv1_.rows(), conv1_.cols()));
    detail::require(conv3_.rows() == 9 * d && conv3_.cols() == d,
                    "conv3 must be 9d x d = " + detail::shape_str(9 * d, d) + ", got " +
                        detail::shape_str(conv3_.rows(), conv3_.cols()));
    detail::require(depthwise_.rows() == 2, "depthwise kernel must have 2 rows (max and mean maps)");
    const auto k = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(depthwise_.cols()))));
    detail::require(k * k == depthwise_.cols() && k % 2 == 1, "depthwise kernel must be k*k taps with odd k");
    kernel_ = k;
    detail::require(conv3_.allFinite() && conv1_.allFinite() && depthwise_.allFinite(),
                    "TSS weights contain non-finite values");
  }

  /// One tensor per file in any supported matrix format.
  static TssWeights load(const std::filesystem::path& conv3, const std::filesystem::path& conv1,
                         const std::filesystem::path& depthwise) {
    return TssWeights(read_matrix(conv3), read_matrix(conv1), read_matrix(depthwise));
  }

  Index dim() const { return conv1_.rows(); }
  Index kernel() const { return kernel_; }
  const Matrix& conv3() const { return conv3_; }
  const Matrix& conv1() const { return conv1_; }
  const Matrix& depthwise() const { return depthwise_; }

 private:
  Matrix conv3_;
  Matrix conv1_;
  Matrix depthwise_;
  Index kernel_ = 1;
};

struct TssTrace {
  Matrix output;
  /// Per-token mask in (0, 1), length M.
  Vector mask;
};

namespace detail {

inline Matrix conv3x3(const Matrix& x, const Matrix& w, Index h, Index wd) {
  const Index d = x.cols();
  Matrix out = Matrix::Zero(x.rows(), w.cols());
  for (Index y = 0; y < h; ++y) {
    for (Index xx = 0; xx < wd; ++xx) {
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = xx + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          out.row(y * wd + xx) += x.row(sy * wd + sx) * w.middleRows((ky * 3 + kx) * d, d);
        }
      }
    }
  }
  return out;
}

inline Matrix label_attention(const Matrix& y, const Matrix& t) {
  const double scale = std::sqrt(static_cast<double>(y.cols()));
  return row_softmax(y * t.transpose() / scale, 1.0) * t;
}

inline Vector depthwise_map(const Vector& map, const Eigen::Ref<const Eigen::RowVectorXd>& kernel, Index k,
                            Index h, Index wd) {
  const Index r = k / 2;
  Vector out = Vector::Zero(map.size());
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < wd; ++x) {
      double acc = 0.0;
      for (Index ky = 0; ky < k; ++ky) {
        const Index sy = y + ky - r;
        if (sy < 0 || sy >= h) continue;
        for (Index kx = 0; kx < k; ++kx) {
          const Index sx = x + kx - r;
          if (sx < 0 || sx >= wd) continue;
          acc += kernel[ky * k + kx] * map[sy * wd + sx];
        }
      }
      out[y * wd + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

inline TssTrace tss_forward_trace(const Matrix& x, const Matrix& t, const TssWeights& w, Index h, Index wd) {
  detail::require(h >= 1 && wd >= 1 && h * wd == x.rows(),
                  "token count " + std::to_string(x.rows()) + " does not match a " + std::to_string(h) + "x" +
                      std::to_string(wd) + " map");
  detail::require(x.cols() == w.dim(), "feature dim " + std::to_string(x.cols()) + " does not match weights dim " +
                                           std::to_string(w.dim()));
  detail::require(t.rows() >= 1 && t.cols() == x.cols(), "label features must be N x d with matching d");
  detail::require(x.allFinite() && t.allFinite(), "TSS inputs contain non-finite values");

  const Matrix a = detail::label_attention(detail::conv3x3(x, w.conv3(), h, wd), t);
  const Matrix b = detail::label_attention(x * w.conv1(), t);
  const Index m = x.rows();
  Vector max_map(m);
  Vector mean_map(m);
  for (Index p = 0; p < m; ++p) {
    max_map[p] = std::max(a.row(p).maxCoeff(), b.row(p).maxCoeff());
    mean_map[p] = (a.row(p).sum() + b.row(p).sum()) / static_cast<double>(2 * x.cols());
  }
  const Vector logits = detail::depthwise_map(max_map, w.depthwise().row(0), w.kernel(), h, wd) +
                        detail::depthwise_map(mean_map, w.depthwise().row(1), w.kernel(), h, wd);
  TssTrace trace;
  trace.mask = logits.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  trace.output = trace.mask.asDiagonal() * x;
  return trace;
}

inline Matrix tss_forward(const Matrix& x, const Matrix& t, const TssWeights& w, Index h, Index wd) {
  return tss_forward_trace(x, t, w, h, wd).output;
}

/// Square map inferred from the token count.
inline Matrix tss_forward(const Matrix& x, const Matrix& t, const TssWeights& w) {
  const auto side = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(x.rows()))));
  detail::require(side * side == x.rows(),
                  "cannot infer a square map from " + std::to_string(x.rows()) + " tokens; pass H and W");
  return tss_forward(x, t, w, side, side);
}

/// prev + (saa(x) + tss(x)) / 2.
inline Matrix lla_layer(const Matrix& prev, const Matrix& x, const Matrix& t, const TssWeights& w, Index h,
                        Index wd) {
  detail::require(prev.rows() == x.rows() && prev.cols() == x.cols(),
                  "residual " + detail::shape_str(prev.rows(), prev.cols()) + " and layer input " +
                      detail::shape_str(x.rows(), x.cols()) + " differ in shape");
  return prev + 0.5 * (saa(x) + tss_forward(x, t, w, h, wd));
}

/// Runs lla_layer over consecutive backbone layers, starting from `initial`.
inline Matrix lla_ladder(const Matrix& initial, const std::vector<Matrix>& layers, const Matrix& t,
                         const std::vector<TssWeights>& weights, Index h, Index wd) {
  detail::require(layers.size() == weights.size(), "need one weight set per ladder layer");
  Matrix state = initial;
  for (std::size_t l = 0; l < layers.size(); ++l) state = lla_layer(state, layers[l], t, weights[l], h, wd);
  return state;
}

}  // namespace kcot
