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

// Planted-matching scenes.
//
// A scene has M random unit region embeddings. n_positive of the N labels are
// planted on distinct regions: the label embedding is a noisy copy of its
// region. The remaining labels are distractors mixed toward a random anchor
// region with weight `distractor_correlation`. Frozen-encoder stand-ins are
// the clean geometry re-noised independently at twice the noise level.
//
// Randomness comes from std::mt19937_64 (fully specified by the standard)
// with hand-written uniform and normal transforms, so a seed yields the same
// scene on every conforming platform.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "kcot/core.hpp"

namespace kcot {

/// Deterministic generator with portable uniform/normal draws.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by rejection, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = 0;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal by the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double x = 0.0;
    double y = 0.0;
    double s = 0.0;
    do {
      x = 2.0 * uniform() - 1.0;
      y = 2.0 * uniform() - 1.0;
      s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = y * f;
    has_spare_ = true;
    return x * f;
  }

  Vector gaussian(Index d) {
    Vector g(d);
    for (Index j = 0; j < d; ++j) g[j] = normal();
    return g;
  }

  Vector unit(Index d) {
    Vector g;
    do {
      g = gaussian(d);
    } while (g.norm() == 0.0);
    return g / g.norm();
  }

  /// `count` distinct values from [0, n) in draw order.
  std::vector<Index> sample(Index n, Index count) {
    std::vector<Index> pool(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) pool[static_cast<std::size_t>(j)] = j;
    for (Index j = 0; j < count; ++j) {
      const auto pick = static_cast<Index>(below(static_cast<std::uint64_t>(n - j))) + j;
      std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SceneSpec {
  Index regions = 16;
  Index labels = 8;
  Index positives = 3;
  Index dim = 16;
  /// Per-coordinate standard deviation of the Gaussian perturbation applied
  /// to unit embeddings before renormalizing.
  double noise_sigma = 0.3;
  double distractor_correlation = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(regions >= 1 && labels >= 1 && dim >= 1, "scene needs regions, labels and dim >= 1");
    detail::require(positives >= 0 && positives <= std::min(regions, labels),
                    "positives must be in [0, min(regions, labels)]");
    detail::require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "noise_sigma must be finite and >= 0");
    detail::require(distractor_correlation >= 0.0 && distractor_correlation < 1.0,
                    "distractor_correlation must be in [0, 1)");
  }
};

struct PlantedPair {
  Index region;
  Index label;
  bool operator==(const PlantedPair&) const = default;
};

struct PlantedScene {
  SceneSpec spec;
  FeatureSet visual;
  LabelSet labels;
  FeatureSet frozen_visual;
  LabelSet frozen_labels;
  LabelVector y;
  /// Sorted by label.
  std::vector<PlantedPair> planted;
  /// Noise-free label geometry the labels were perturbed from.
  Matrix clean_labels;
};

namespace detail {

inline Vector perturb(SceneRng& rng, const Vector& base, double sigma) {
  if (sigma == 0.0) return base;
  Vector out = base + sigma * rng.gaussian(base.size());
  detail::require(out.norm() > 0.0, "perturbation produced a zero vector");
  return out / out.norm();
}

}  // namespace detail

inline PlantedScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  SceneRng rng(spec.seed);
  const Index m = spec.regions;
  const Index n = spec.labels;
  const Index d = spec.dim;

  Matrix regions(m, d);
  for (Index k = 0; k < m; ++k) regions.row(k) = rng.unit(d).transpose();

  const std::vector<Index> pos_labels = rng.sample(n, spec.positives);
  const std::vector<Index> pos_regions = rng.sample(m, spec.positives);
  std::vector<PlantedPair> planted;
  std::vector<int> y(static_cast<std::size_t>(n), 0);
  std::vector<Index> anchor(static_cast<std::size_t>(n), -1);
  for (std::size_t j = 0; j < pos_labels.size(); ++j) {
    planted.push_back({pos_regions[j], pos_labels[j]});
    y[static_cast<std::size_t>(pos_labels[j])] = 1;
    anchor[static_cast<std::size_t>(pos_labels[j])] = pos_regions[j];
  }
  std::sort(planted.begin(), planted.end(),
            [](const PlantedPair& a, const PlantedPair& b) { return a.label < b.label; });

  const double rho = spec.distractor_correlation;
  Matrix clean(n, d);
  for (Index i = 0; i < n; ++i) {
    if (y[static_cast<std::size_t>(i)]) {
      clean.row(i) = regions.row(anchor[static_cast<std::size_t>(i)]);
    } else {
      const Index a = static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
      Vector t = rho * regions.row(a).transpose() + std::sqrt(1.0 - rho * rho) * rng.unit(d);
      clean.row(i) = (t / t.norm()).transpose();
    }
  }

  Matrix labels = clean;
  for (Index i = 0; i < n; ++i) {
    if (y[static_cast<std::size_t>(i)]) {
      labels.row(i) = detail::perturb(rng, clean.row(i).transpose(), spec.noise_sigma).transpose();
    }
  }
  Matrix frozen_visual(m, d);
  for (Index k = 0; k < m; ++k) {
    frozen_visual.row(k) = detail::perturb(rng, regions.row(k).transpose(), 2.0 * spec.noise_sigma).transpose();
  }
  Matrix frozen_labels(n, d);
  for (Index i = 0; i < n; ++i) {
    frozen_labels.row(i) = detail::perturb(rng, clean.row(i).transpose(), 2.0 * spec.noise_sigma).transpose();
  }

  return PlantedScene{spec,
                      FeatureSet::normalized(std::move(regions)),
                      LabelSet::normalized(std::move(labels)),
                      FeatureSet::normalized(std::move(frozen_visual)),
                      LabelSet::normalized(std::move(frozen_labels)),
                      LabelVector(std::move(y)),
                      std::move(planted),
                      std::move(clean)};
}

/// Fraction of planted (region, label) pairs whose region carries the largest
/// weight in that label's column. Ties go to the lowest region index.
inline double planted_recovery_rate(const Matrix& plan, const PlantedScene& scene) {
  detail::require(plan.rows() == scene.visual.size() && plan.cols() == scene.labels.size(),
                  "plan shape " + detail::shape_str(plan.rows(), plan.cols()) + " does not match scene " +
                      detail::shape_str(scene.visual.size(), scene.labels.size()));
  if (scene.planted.empty()) return 0.0;
  Index hits = 0;
  for (const PlantedPair& p : scene.planted) {
    Index best = 0;
    for (Index k = 1; k < plan.rows(); ++k) {
      if (plan(k, p.label) > plan(best, p.label)) best = k;
    }
    if (best == p.region) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scene.planted.size());
}

inline double planted_recovery_rate(const TransportPlan& plan, const PlantedScene& scene) {
  return planted_recovery_rate(plan.entries(), scene);
}

/// FNV-1a over the little-endian bytes of every scene matrix, y and the
/// planted pairs.
inline std::uint64_t scene_checksum(const PlantedScene& scene) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
      h ^= p[j];
      h *= 1099511628211ull;
    }
  };
  auto mix_u64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int j = 0; j < 8; ++j) b[j] = static_cast<unsigned char>(v >> (8 * j));
    mix_bytes(b, 8);
  };
  auto mix_matrix = [&](const Matrix& m) {
    mix_u64(static_cast<std::uint64_t>(m.rows()));
    mix_u64(static_cast<std::uint64_t>(m.cols()));
    for (Index j = 0; j < m.size(); ++j) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, m.data() + j, sizeof(bits));
      mix_u64(bits);
    }
  };
  mix_matrix(scene.visual.rows());
  mix_matrix(scene.labels.rows());
  mix_matrix(scene.frozen_visual.rows());
  mix_matrix(scene.frozen_labels.rows());
  for (int v : scene.y.values()) mix_u64(static_cast<std::uint64_t>(v));
  for (const PlantedPair& p : scene.planted) {
    mix_u64(static_cast<std::uint64_t>(p.region));
    mix_u64(static_cast<std::uint64_t>(p.label));
  }
  return h;
}

}  // namespace kcot
