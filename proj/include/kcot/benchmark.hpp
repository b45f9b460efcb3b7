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

// Strategy comparison on planted scenes.
//
// Each (seed, noise) cell generates `batch` scenes with seeds
// seed * batch + 0 .. seed * batch + batch - 1 and runs every strategy on
// them. Recovery is averaged over the scenes; F1@k and mAP are batch metrics
// over the stacked B x N score matrix.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "kcot/core.hpp"
#include "kcot/knowledge_ot.hpp"
#include "kcot/matchers.hpp"
#include "kcot/metrics.hpp"
#include "kcot/parallel.hpp"
#include "kcot/synth.hpp"

namespace kcot {

struct BenchConfig {
  /// Shape and correlation of every scene; its seed and noise are overridden.
  SceneSpec scene;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<double> noise_levels = {0.3};
  Index batch = 8;
  Index k = 3;
  std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  SolverConfig solver;
  SolveMode kcot_mode = SolveMode::kInference;
  bool timing = false;
  std::size_t threads = 1;

  void validate() const {
    scene.validate();
    solver.validate();
    detail::require(!seeds.empty(), "bench needs at least one seed");
    detail::require(!noise_levels.empty(), "bench needs at least one noise level");
    for (double s : noise_levels) {
      detail::require(std::isfinite(s) && s >= 0.0, "noise levels must be finite and >= 0");
    }
    detail::require(batch >= 1, "batch must be >= 1");
    detail::require(k >= 1 && k <= scene.labels, "k must be in [1, labels]");
    detail::require(!strategies.empty(), "bench needs at least one strategy");
  }
};

struct BenchRow {
  Strategy strategy;
  /// Empty for summary rows.
  std::optional<std::uint64_t> seed;
  double noise = 0.0;
  double recovery = 0.0;
  double f1 = 0.0;
  double map = 0.0;
  /// Only filled when timing is requested.
  double wall_ms = 0.0;
};

struct BenchResult {
  /// Sorted by noise, then strategy in kAllStrategies order, then seed.
  std::vector<BenchRow> rows;
  /// One mean row per (noise, strategy), same order.
  std::vector<BenchRow> summary;
};

namespace detail {

inline Index strategy_rank(Strategy s) {
  return static_cast<Index>(std::find(kAllStrategies.begin(), kAllStrategies.end(), s) - kAllStrategies.begin());
}

inline std::vector<BenchRow> bench_cell(const BenchConfig& cfg, std::uint64_t seed, double noise) {
  std::vector<PlantedScene> scenes;
  scenes.reserve(static_cast<std::size_t>(cfg.batch));
  Matrix truth(cfg.batch, cfg.scene.labels);
  for (Index b = 0; b < cfg.batch; ++b) {
    SceneSpec spec = cfg.scene;
    spec.noise_sigma = noise;
    spec.seed = seed * static_cast<std::uint64_t>(cfg.batch) + static_cast<std::uint64_t>(b);
    scenes.push_back(generate_scene(spec));
    for (Index i = 0; i < spec.labels; ++i) truth(b, i) = scenes.back().y[i] ? 1.0 : 0.0;
  }
  const bool any_positive = truth.sum() > 0.0;

  std::vector<BenchRow> rows;
  for (Strategy s : cfg.strategies) {
    Matrix scores(cfg.batch, cfg.scene.labels);
    double recovery = 0.0;
    const auto start = std::chrono::steady_clock::now();
    for (Index b = 0; b < cfg.batch; ++b) {
      const PlantedScene& sc = scenes[static_cast<std::size_t>(b)];
      const TeacherInputs teacher{sc.frozen_visual, sc.frozen_labels, sc.y};
      const MatchResult r = run_strategy(s, sc.visual, sc.labels, teacher, cfg.solver, cfg.kcot_mode);
      scores.row(b) = r.scores.values().transpose();
      recovery += planted_recovery_rate(r.weights, sc);
    }
    const auto stop = std::chrono::steady_clock::now();
    BenchRow row{s, seed, noise};
    row.recovery = recovery / static_cast<double>(cfg.batch);
    if (any_positive) {
      row.f1 = precision_recall_f1_at_k(scores, truth, cfg.k).f1;
      row.map = mean_average_precision(scores, truth);
    }
    if (cfg.timing) row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

inline BenchResult run_planted_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  struct Cell {
    std::uint64_t seed;
    double noise;
  };
  std::vector<Cell> cells;
  for (double noise : cfg.noise_levels) {
    for (std::uint64_t seed : cfg.seeds) cells.push_back({seed, noise});
  }
  std::vector<std::vector<BenchRow>> out(cells.size());
  parallel_for(cells.size(), cfg.threads,
               [&](std::size_t j) { out[j] = detail::bench_cell(cfg, cells[j].seed, cells[j].noise); });

  BenchResult result;
  for (auto& cell : out) result.rows.insert(result.rows.end(), cell.begin(), cell.end());
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const BenchRow& a, const BenchRow& b) {
    if (a.noise != b.noise) return a.noise < b.noise;
    if (a.strategy != b.strategy) return detail::strategy_rank(a.strategy) < detail::strategy_rank(b.strategy);
    return *a.seed < *b.seed;
  });

  for (std::size_t j = 0; j < result.rows.size();) {
    std::size_t end = j;
    BenchRow mean{result.rows[j].strategy, std::nullopt, result.rows[j].noise};
    while (end < result.rows.size() && result.rows[end].noise == mean.noise &&
           result.rows[end].strategy == mean.strategy) {
      mean.recovery += result.rows[end].recovery;
      mean.f1 += result.rows[end].f1;
      mean.map += result.rows[end].map;
      mean.wall_ms += result.rows[end].wall_ms;
      ++end;
    }
    const auto count = static_cast<double>(end - j);
    mean.recovery /= count;
    mean.f1 /= count;
    mean.map /= count;
    mean.wall_ms /= count;
    result.summary.push_back(mean);
    j = end;
  }
  return result;
}

}  // namespace kcot
