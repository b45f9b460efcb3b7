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

#include "cli/commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kcot/benchmark.hpp"
#include "kcot/core.hpp"
#include "kcot/cost.hpp"
#include "kcot/knowledge_ot.hpp"
#include "kcot/matchers.hpp"
#include "kcot/matrix_io.hpp"
#include "kcot/metrics.hpp"
#include "kcot/parallel.hpp"
#include "kcot/sinkhorn.hpp"
#include "kcot/synth.hpp"

namespace kcot::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPlanDumpThreshold = 1e-12;

enum class TableFormat { kCsv, kJson };

// Raw command-line values. Everything is optional so that only flags the user
// actually passed override the config file.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> strategy;
  std::optional<std::string> mode;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> tau;
  std::optional<double> tau_prime;
  std::optional<int> max_iter;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  bool log_domain = false;

  std::optional<std::string> cost_path;
  std::optional<std::string> u_path;
  std::optional<std::string> v_path;
  std::optional<std::string> visual_path;
  std::optional<std::string> labels_path;
  std::optional<std::string> frozen_visual_path;
  std::optional<std::string> frozen_labels_path;
  std::optional<std::string> y_path;
  std::optional<std::string> scene_dir;
  std::optional<std::string> global_path;
  std::optional<std::string> scores_path;
  std::optional<std::string> truth_path;

  std::optional<Index> regions;
  std::optional<Index> labels;
  std::optional<Index> positives;
  std::optional<Index> dim;
  std::optional<std::string> noise;
  std::optional<double> correlation;
  std::optional<std::string> matrix_format;

  std::optional<std::uint64_t> seeds;
  std::optional<Index> batch;
  std::optional<Index> k;
  bool timing = false;
};

struct RunConfig {
  SolverConfig solver;
  std::vector<Strategy> strategies;
  SolveMode mode = SolveMode::kInference;
  TableFormat format = TableFormat::kCsv;
  std::optional<fs::path> out;
  SceneSpec scene;
  std::vector<double> noise = {0.3};
  MatrixFormat matrix_format = MatrixFormat::kCsv;
  std::uint64_t seeds = 1;
  Index batch = 8;
  Index k = 3;
  bool timing = false;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) parts.emplace_back(detail::trim(item));
  return parts;
}

std::vector<Strategy> parse_strategy_list(const std::string& s) {
  std::vector<Strategy> out;
  for (const std::string& name : split_list(s)) out.push_back(parse_strategy(name));
  detail::require(!out.empty(), "empty strategy list");
  return out;
}

std::vector<double> parse_noise_list(const std::string& s) {
  std::vector<double> out;
  for (const std::string& item : split_list(s)) {
    double v = 0.0;
    detail::require(detail::parse_double(item, v), "invalid noise level '" + item + "'");
    out.push_back(v);
  }
  detail::require(!out.empty(), "empty noise list");
  return out;
}

TableFormat parse_table_format(const std::string& s) {
  if (s == "csv") return TableFormat::kCsv;
  if (s == "json") return TableFormat::kJson;
  throw Error("unknown format '" + s + "' (expected csv|json)");
}

MatrixFormat parse_matrix_format(const std::string& s) {
  if (s == "csv") return MatrixFormat::kCsv;
  if (s == "bin") return MatrixFormat::kBinary;
  throw Error("unknown matrix format '" + s + "' (expected csv|bin)");
}

void apply_config_file(RunConfig& rc, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  detail::require(j.is_object(), "config must be a JSON object with flat keys");
  for (const auto& [key, val] : j.items()) {
    if (key == "lambda1") {
      rc.solver.lambda1 = val.get<double>();
    } else if (key == "lambda2") {
      rc.solver.lambda2 = val.get<double>();
    } else if (key == "tau") {
      rc.solver.tau = val.get<double>();
    } else if (key == "tau_prime") {
      rc.solver.tau_prime = val.get<double>();
    } else if (key == "max_iter") {
      rc.solver.max_iter = val.get<int>();
    } else if (key == "tol") {
      rc.solver.tol = val.get<double>();
    } else if (key == "seed") {
      rc.solver.seed = val.get<std::uint64_t>();
    } else if (key == "log_domain") {
      rc.solver.log_domain = val.get<bool>();
    } else if (key == "strategy") {
      rc.strategies = parse_strategy_list(val.get<std::string>());
    } else if (key == "mode") {
      rc.mode = parse_solve_mode(val.get<std::string>());
    } else if (key == "format") {
      rc.format = parse_table_format(val.get<std::string>());
    } else if (key == "out") {
      rc.out = val.get<std::string>();
    } else if (key == "regions") {
      rc.scene.regions = val.get<Index>();
    } else if (key == "labels") {
      rc.scene.labels = val.get<Index>();
    } else if (key == "positives") {
      rc.scene.positives = val.get<Index>();
    } else if (key == "dim") {
      rc.scene.dim = val.get<Index>();
    } else if (key == "noise_sigma") {
      rc.noise = val.is_array() ? val.get<std::vector<double>>() : std::vector<double>{val.get<double>()};
    } else if (key == "distractor_correlation") {
      rc.scene.distractor_correlation = val.get<double>();
    } else if (key == "matrix_format") {
      rc.matrix_format = parse_matrix_format(val.get<std::string>());
    } else if (key == "seeds") {
      rc.seeds = val.get<std::uint64_t>();
    } else if (key == "batch") {
      rc.batch = val.get<Index>();
    } else if (key == "k") {
      rc.k = val.get<Index>();
    } else if (key == "timing") {
      rc.timing = val.get<bool>();
    } else {
      throw Error("unknown config key '" + key + "'");
    }
  }
}

// Defaults, then the config file, then explicit flags.
RunConfig resolve(const Flags& f) {
  RunConfig rc;
  if (f.config) apply_config_file(rc, *f.config);
  if (f.lambda1) rc.solver.lambda1 = *f.lambda1;
  if (f.lambda2) rc.solver.lambda2 = *f.lambda2;
  if (f.tau) rc.solver.tau = *f.tau;
  if (f.tau_prime) rc.solver.tau_prime = *f.tau_prime;
  if (f.max_iter) rc.solver.max_iter = *f.max_iter;
  if (f.tol) rc.solver.tol = *f.tol;
  if (f.seed) rc.solver.seed = *f.seed;
  if (f.log_domain) rc.solver.log_domain = true;
  if (f.strategy) rc.strategies = parse_strategy_list(*f.strategy);
  if (f.mode) rc.mode = parse_solve_mode(*f.mode);
  if (f.format) rc.format = parse_table_format(*f.format);
  if (f.out) rc.out = *f.out;
  if (f.regions) rc.scene.regions = *f.regions;
  if (f.labels) rc.scene.labels = *f.labels;
  if (f.positives) rc.scene.positives = *f.positives;
  if (f.dim) rc.scene.dim = *f.dim;
  if (f.noise) rc.noise = parse_noise_list(*f.noise);
  if (f.correlation) rc.scene.distractor_correlation = *f.correlation;
  if (f.matrix_format) rc.matrix_format = parse_matrix_format(*f.matrix_format);
  if (f.seeds) rc.seeds = *f.seeds;
  if (f.batch) rc.batch = *f.batch;
  if (f.k) rc.k = *f.k;
  if (f.timing) rc.timing = true;
  rc.solver.validate();
  return rc;
}

Strategy single_strategy(const RunConfig& rc, Strategy fallback) {
  if (rc.strategies.empty()) return fallback;
  detail::require(rc.strategies.size() == 1, "this command takes a single strategy");
  return rc.strategies.front();
}

fs::path require_out(const RunConfig& rc) {
  detail::require(rc.out.has_value(), "--out <dir> is required for this command");
  fs::create_directories(*rc.out);
  return *rc.out;
}

// Writes to <out>/<name> when --out is set, otherwise to the stream.
void emit(const RunConfig& rc, const std::string& name, const std::string& body, std::ostream& out) {
  if (rc.out) {
    fs::create_directories(*rc.out);
    write_file_atomic(*rc.out / name, body);
  } else {
    out << body;
  }
}

std::string table_ext(const RunConfig& rc) { return rc.format == TableFormat::kJson ? ".json" : ".csv"; }

Vector as_vector(const Matrix& m, const std::string& what) {
  detail::require(m.rows() == 1 || m.cols() == 1,
                  what + " must be a single row or column, got " + detail::shape_str(m.rows(), m.cols()));
  return Eigen::Map<const Vector>(m.data(), m.size());
}

LabelVector as_label_vector(const Matrix& m) {
  const Vector v = as_vector(m, "y");
  std::vector<int> y(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    detail::require(v[i] == 0.0 || v[i] == 1.0, "y entries must be 0 or 1");
    y[static_cast<std::size_t>(i)] = v[i] == 1.0 ? 1 : 0;
  }
  return LabelVector(std::move(y));
}

// --------------------------------------------------------------------------
// Scene directories

const char* const kSceneMatrices[] = {"visual", "labels", "frozen_visual", "frozen_labels"};

fs::path scene_matrix_path(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".csv", ".bin"}) {
    const fs::path p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw Error("scene directory " + dir.string() + " has no " + stem + ".csv or " + stem + ".bin");
}

json spec_json(const SceneSpec& s) {
  return json{{"regions", s.regions},
              {"labels", s.labels},
              {"positives", s.positives},
              {"dim", s.dim},
              {"noise_sigma", s.noise_sigma},
              {"distractor_correlation", s.distractor_correlation},
              {"seed", s.seed}};
}

// Features and supervision for one matching instance.
struct Instance {
  FeatureSet visual;
  LabelSet labels;
  std::optional<FeatureSet> frozen_visual;
  std::optional<LabelSet> frozen_labels;
  std::optional<LabelVector> y;

  std::optional<TeacherInputs> teacher() const {
    if (!frozen_visual || !frozen_labels || !y) return std::nullopt;
    return TeacherInputs{*frozen_visual, *frozen_labels, *y};
  }
};

Instance load_scene_dir(const fs::path& dir) {
  std::ifstream in(dir / "scene.json");
  if (!in) throw Error("scene directory " + dir.string() + " has no scene.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("scene.json is not valid JSON: " + std::string(e.what()));
  }
  return Instance{FeatureSet(read_matrix(scene_matrix_path(dir, "visual"))),
                  LabelSet(read_matrix(scene_matrix_path(dir, "labels"))),
                  FeatureSet(read_matrix(scene_matrix_path(dir, "frozen_visual"))),
                  LabelSet(read_matrix(scene_matrix_path(dir, "frozen_labels"))),
                  LabelVector(j.at("y").get<std::vector<int>>())};
}

Instance load_instance(const Flags& f) {
  const bool features = f.visual_path || f.labels_path;
  detail::require(features != f.scene_dir.has_value(),
                  "give exactly one input source: --scene <dir> or --visual/--labels");
  if (f.scene_dir) return load_scene_dir(*f.scene_dir);
  detail::require(f.visual_path && f.labels_path, "--visual and --labels must be given together");
  Instance inst{FeatureSet(read_matrix(*f.visual_path)), LabelSet(read_matrix(*f.labels_path)), std::nullopt,
                std::nullopt, std::nullopt};
  if (f.frozen_visual_path) inst.frozen_visual.emplace(read_matrix(*f.frozen_visual_path));
  if (f.frozen_labels_path) inst.frozen_labels.emplace(read_matrix(*f.frozen_labels_path));
  if (f.y_path) inst.y.emplace(as_label_vector(read_matrix(*f.y_path)));
  return inst;
}

// --------------------------------------------------------------------------
// solve

std::string plan_csv(const Matrix& plan) {
  std::string s = "region,label,weight\n";
  for (Index k = 0; k < plan.rows(); ++k) {
    for (Index i = 0; i < plan.cols(); ++i) {
      if (plan(k, i) > kPlanDumpThreshold) {
        s += std::to_string(k) + "," + std::to_string(i) + "," + format_double(plan(k, i)) + "\n";
      }
    }
  }
  return s;
}

json report_json(std::string_view strategy, int iterations, double residual, bool converged, double objective) {
  return json{{"strategy", strategy},
              {"iterations", iterations},
              {"residual", residual},
              {"converged", converged},
              {"objective", objective}};
}

int cmd_solve(const Flags& f, std::ostream& out) {
  const RunConfig rc = resolve(f);
  const fs::path dir = require_out(rc);
  Matrix plan;
  json report;
  bool converged = true;

  if (f.cost_path) {
    detail::require(!f.scene_dir && !f.visual_path && !f.labels_path,
                    "give exactly one input source: --cost, --scene or --visual/--labels");
    const CostMatrix cost(read_matrix(*f.cost_path));
    const Marginal u = f.u_path ? Marginal(as_vector(read_matrix(*f.u_path), "u")) : Marginal::uniform(cost.rows());
    const Marginal v = f.v_path ? Marginal(as_vector(read_matrix(*f.v_path), "v")) : Marginal::uniform(cost.cols());
    const SolveReport r = sinkhorn(cost, u, v, rc.solver.lambda1, sinkhorn_options(rc.solver));
    plan = r.plan.entries();
    converged = r.converged;
    report = report_json("ot", r.iterations_used, r.final_marginal_residual, r.converged, r.objective);
  } else {
    detail::require(!f.u_path && !f.v_path, "--u/--v only apply to --cost input");
    const Instance inst = load_instance(f);
    const Strategy strategy = single_strategy(rc, Strategy::kKcot);
    const MatchResult r = run_strategy(strategy, inst.visual, inst.labels, inst.teacher(), rc.solver, rc.mode);
    plan = r.weights;
    if (r.report) {
      converged = r.report->converged;
      report = report_json(strategy_name(strategy), r.report->iterations_used, r.report->final_marginal_residual,
                           r.report->converged, r.report->objective);
    } else {
      // Non-transport strategies only honor the label marginal.
      const double n = static_cast<double>(plan.cols());
      const double residual = (plan.colwise().sum().array() - 1.0 / n).abs().maxCoeff();
      const CostMatrix cost = build_cost(inst.visual, inst.labels, rc.solver.tau);
      report = report_json(strategy_name(strategy), 0, residual, true, plan.cwiseProduct(cost.entries()).sum());
    }
  }

  write_file_atomic(dir / "plan.csv", plan_csv(plan));
  write_file_atomic(dir / "report.json", report.dump(2) + "\n");
  if (!converged) {
    out << "warning: Sinkhorn stopped at max_iter without reaching tol\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// synth

int cmd_synth(const Flags& f, std::ostream&) {
  RunConfig rc = resolve(f);
  const fs::path dir = require_out(rc);
  detail::require(rc.noise.size() == 1, "synth takes a single noise level");
  SceneSpec spec = rc.scene;
  spec.noise_sigma = rc.noise.front();
  spec.seed = rc.solver.seed;
  const PlantedScene scene = generate_scene(spec);

  const std::string ext = rc.matrix_format == MatrixFormat::kBinary ? ".bin" : ".csv";
  const Matrix* mats[] = {&scene.visual.rows(), &scene.labels.rows(), &scene.frozen_visual.rows(),
                          &scene.frozen_labels.rows()};
  for (std::size_t j = 0; j < 4; ++j) {
    write_file_atomic(dir / (std::string(kSceneMatrices[j]) + ext), encode_matrix(*mats[j], rc.matrix_format));
  }
  json planted = json::array();
  for (const PlantedPair& p : scene.planted) planted.push_back({{"region", p.region}, {"label", p.label}});
  std::ostringstream checksum;
  checksum << std::hex << scene_checksum(scene);
  const json sidecar{{"spec", spec_json(spec)}, {"y", scene.y.values()}, {"planted", planted},
                     {"checksum", checksum.str()}};
  write_file_atomic(dir / "scene.json", sidecar.dump(2) + "\n");
  return kExitOk;
}

// --------------------------------------------------------------------------
// score

int cmd_score(const Flags& f, std::ostream& out) {
  const RunConfig rc = resolve(f);
  const Instance inst = load_instance(f);
  const Strategy strategy = single_strategy(rc, Strategy::kKcot);
  const MatchResult r = run_strategy(strategy, inst.visual, inst.labels, inst.teacher(), rc.solver, rc.mode);
  const Vector& local = r.scores.values();
  std::optional<Vector> global;
  std::optional<Vector> final_s;
  if (f.global_path) {
    const FeatureSet g(read_matrix(*f.global_path));
    detail::require(g.size() == 1, "global feature must be a single row");
    global = cosine_similarity_matrix(g, inst.labels).row(0).transpose();
    final_s = final_score(r.scores, ScoreVector(*global)).values();
  }

  std::string body;
  if (rc.format == TableFormat::kJson) {
    json j{{"strategy", strategy_name(strategy)}, {"local", std::vector<double>(local.begin(), local.end())}};
    if (global) {
      j["global"] = std::vector<double>(global->begin(), global->end());
      j["final"] = std::vector<double>(final_s->begin(), final_s->end());
    }
    body = j.dump(2) + "\n";
  } else {
    body = global ? "label,local,global,final\n" : "label,local\n";
    for (Index i = 0; i < local.size(); ++i) {
      body += std::to_string(i) + "," + format_double(local[i]);
      if (global) body += "," + format_double((*global)[i]) + "," + format_double((*final_s)[i]);
      body += "\n";
    }
  }
  emit(rc, "scores" + table_ext(rc), body, out);
  return kExitOk;
}

// --------------------------------------------------------------------------
// metrics

int cmd_metrics(const Flags& f, std::ostream& out) {
  const RunConfig rc = resolve(f);
  detail::require(f.scores_path && f.truth_path, "metrics needs --scores and --truth");
  const Matrix scores = read_matrix(*f.scores_path);
  const Matrix truth = read_matrix(*f.truth_path);
  const TopKMetrics m = precision_recall_f1_at_k(scores, truth, rc.k);
  const double map = mean_average_precision(scores, truth);
  std::string body;
  if (rc.format == TableFormat::kJson) {
    body = json{{"k", rc.k}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"map", map}}.dump(2) +
           "\n";
  } else {
    body = "k,precision,recall,f1,map\n" + std::to_string(rc.k) + "," + format_double(m.precision) + "," +
           format_double(m.recall) + "," + format_double(m.f1) + "," + format_double(map) + "\n";
  }
  emit(rc, "metrics" + table_ext(rc), body, out);
  return kExitOk;
}

// --------------------------------------------------------------------------
// bench

json bench_row_json(const BenchRow& r, bool timing) {
  json j{{"strategy", strategy_name(r.strategy)},
         {"noise", r.noise},
         {"recovery", r.recovery},
         {"f1", r.f1},
         {"map", r.map}};
  j["seed"] = r.seed ? json(*r.seed) : json("mean");
  if (timing) j["wall_ms"] = r.wall_ms;
  return j;
}

std::string bench_row_csv(const BenchRow& r, bool timing) {
  std::string s = std::string(strategy_name(r.strategy)) + "," + (r.seed ? std::to_string(*r.seed) : "mean") + "," +
                  format_double(r.noise) + "," + format_double(r.recovery) + "," + format_double(r.f1) + "," +
                  format_double(r.map);
  if (timing) s += "," + format_double(r.wall_ms);
  return s + "\n";
}

int cmd_bench(const Flags& f, std::ostream& out) {
  const RunConfig rc = resolve(f);
  detail::require(rc.seeds >= 1, "--seeds must be >= 1");
  BenchConfig cfg;
  cfg.scene = rc.scene;
  cfg.seeds.clear();
  for (std::uint64_t j = 0; j < rc.seeds; ++j) cfg.seeds.push_back(rc.solver.seed + j);
  cfg.noise_levels = rc.noise;
  cfg.batch = rc.batch;
  cfg.k = rc.k;
  if (!rc.strategies.empty()) cfg.strategies = rc.strategies;
  cfg.solver = rc.solver;
  cfg.kcot_mode = rc.mode;
  cfg.timing = rc.timing;
  cfg.threads = default_thread_count();
  const BenchResult result = run_planted_benchmark(cfg);

  std::string body;
  if (rc.format == TableFormat::kJson) {
    json rows = json::array();
    json summary = json::array();
    for (const BenchRow& r : result.rows) rows.push_back(bench_row_json(r, rc.timing));
    for (const BenchRow& r : result.summary) summary.push_back(bench_row_json(r, rc.timing));
    body = json{{"k", rc.k}, {"rows", rows}, {"summary", summary}}.dump(2) + "\n";
  } else {
    body = "strategy,seed,noise,recovery,f1_at_" + std::to_string(rc.k) + ",map";
    if (rc.timing) body += ",wall_ms";
    body += "\n";
    for (const BenchRow& r : result.rows) body += bench_row_csv(r, rc.timing);
    for (const BenchRow& r : result.summary) body += bench_row_csv(r, rc.timing);
  }
  emit(rc, "bench" + table_ext(rc), body, out);
  return kExitOk;
}

// --------------------------------------------------------------------------
// option wiring

void add_common(CLI::App& sub, Flags& f) {
  sub.add_option("--config", f.config, "JSON config with flat keys; flags override it");
  sub.add_option("--out", f.out, "Output directory");
  sub.add_option("--format", f.format, "Table output format: csv|json");
  sub.add_option("--seed", f.seed, "RNG seed (scene seed for synth, first seed for bench)");
}

void add_solver(CLI::App& sub, Flags& f) {
  sub.add_option("--strategy", f.strategy, "average|reweight|bipartite|ot|kcot");
  sub.add_option("--mode", f.mode, "KCOT solve mode: train|inference");
  sub.add_option("--lambda1", f.lambda1, "Entropy weight");
  sub.add_option("--lambda2", f.lambda2, "Teacher KL weight");
  sub.add_option("--tau", f.tau, "Similarity temperature");
  sub.add_option("--tau-prime", f.tau_prime, "Loss temperature");
  sub.add_option("--max-iter", f.max_iter, "Sinkhorn iteration cap");
  sub.add_option("--tol", f.tol, "Sinkhorn marginal tolerance");
  sub.add_flag("--log-domain", f.log_domain, "Use log-domain Sinkhorn updates");
}

void add_features(CLI::App& sub, Flags& f) {
  sub.add_option("--scene", f.scene_dir, "Scene directory written by `synth`");
  sub.add_option("--visual", f.visual_path, "Region features (M x d)");
  sub.add_option("--labels", f.labels_path, "Label features (N x d)");
  sub.add_option("--frozen-visual", f.frozen_visual_path, "Frozen region features for the teacher plan");
  sub.add_option("--frozen-labels", f.frozen_labels_path, "Frozen label features for the teacher plan");
  sub.add_option("--y", f.y_path, "Binary ground-truth label vector");
}

void add_scene(CLI::App& sub, Flags& f) {
  sub.add_option("--regions", f.regions, "Regions per scene");
  sub.add_option("--n-labels", f.labels, "Labels per scene");
  sub.add_option("--positives", f.positives, "Planted positive labels per scene");
  sub.add_option("--dim", f.dim, "Embedding dimension");
  sub.add_option("--noise", f.noise, "Noise sigma (comma-separated list for bench)");
  sub.add_option("--correlation", f.correlation, "Distractor correlation in [0, 1)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-constrained optimal transport toolkit", "kcot"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* solve = app.add_subcommand("solve", "Solve one matching instance and write plan.csv + report.json");
  add_common(*solve, f);
  add_solver(*solve, f);
  add_features(*solve, f);
  solve->add_option("--cost", f.cost_path, "Cost matrix; solved directly with Sinkhorn at lambda1");
  solve->add_option("--u", f.u_path, "Row marginal for --cost (default uniform)");
  solve->add_option("--v", f.v_path, "Column marginal for --cost (default uniform)");

  CLI::App* bench = app.add_subcommand("bench", "Compare strategies on planted scenes");
  add_common(*bench, f);
  add_solver(*bench, f);
  add_scene(*bench, f);
  bench->add_option("--seeds", f.seeds, "Number of consecutive seeds");
  bench->add_option("--batch", f.batch, "Scenes per (seed, noise) row");
  bench->add_option("-k,--k", f.k, "Top-k for F1");
  bench->add_flag("--timing", f.timing, "Add a wall-clock column (output is then not reproducible)");

  CLI::App* synth = app.add_subcommand("synth", "Generate a planted scene directory");
  add_common(*synth, f);
  add_scene(*synth, f);
  synth->add_option("--matrix-format", f.matrix_format, "Matrix files: csv|bin");

  CLI::App* score = app.add_subcommand("score", "Per-label scores for one instance");
  add_common(*score, f);
  add_solver(*score, f);
  add_features(*score, f);
  score->add_option("--global", f.global_path, "Global image feature (1 x d) for the fused score");

  CLI::App* metrics = app.add_subcommand("metrics", "P@k, R@k, F1@k and mAP for a score batch");
  add_common(*metrics, f);
  metrics->add_option("--scores", f.scores_path, "B x N scores");
  metrics->add_option("--truth", f.truth_path, "B x N binary ground truth");
  metrics->add_option("-k,--k", f.k, "Top-k");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  try {
    if (*solve) return cmd_solve(f, out);
    if (*bench) return cmd_bench(f, out);
    if (*synth) return cmd_synth(f, out);
    if (*score) return cmd_score(f, out);
    if (*metrics) return cmd_metrics(f, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace kcot::cli
