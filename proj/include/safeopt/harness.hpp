/*
 * Copyright 2026 The safeopt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "safeopt/cmdp_env.hpp"
#include "safeopt/meta_opt.hpp"
#include "safeopt/nav_train.hpp"
#include "safeopt/policy.hpp"
#include "safeopt/qcqp.hpp"

namespace safeopt {

enum class ExperimentKind { Qcqp, MetaTrain, NavTrain };

std::string_view experiment_name(ExperimentKind kind) noexcept;
/// Accepts "qcqp", "meta-train", "nav-train"; throws ConfigInvalid.
ExperimentKind parse_experiment(std::string_view name);

struct QcqpExperimentSettings {
  QcqpGeneratorConfig generator;
  /// Held-out instances with an infeasible start.
  std::size_t instances = 32;
  /// Instances whose unconstrained minimizer is feasible, for the
  /// objective comparison against plain gradient descent.
  std::size_t feasible_instances = 8;
  std::size_t steps = 1000;
  std::vector<QcqpSolver> solvers{QcqpSolver::Fisar, QcqpSolver::Plain, QcqpSolver::Adam, QcqpSolver::RmsProp,
                                  QcqpSolver::Projected};
  /// Optimizer checkpoint; required when solvers contains fisar. Resolved
  /// like output_dir, so a meta-train output can be named directly.
  std::string optimizer_checkpoint;
};

struct MetaTrainSettings {
  std::size_t outer_steps = 400;
};

struct NavExperimentSettings {
  NavTrainSettings train;
  /// Checkpoint used when train.phi_mode is Pretrained; resolved like
  /// output_dir.
  std::string phi_checkpoint;
  /// Also run the one-step projected-gradient method on every seed.
  bool projected_baseline = true;
};

/// Everything one experiment run depends on. Defaults mirror the reference
/// hyperparameters; keys in a config file override them one by one.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Qcqp;
  std::vector<std::uint64_t> seeds{0};
  /// Relative paths are placed under $SAFEOPT_OUTPUT_ROOT when it is set.
  std::string output_dir = "runs";
  RecurrentOptimizerConfig optimizer;
  UnrollConfig unroll;
  KappaFn kappa;
  /// Step sizes of the unconstrained QCQP baselines.
  double lr_plain = 0.01;
  double lr_adam = 0.01;
  double lr_rmsprop = 0.01;
  QcqpExperimentSettings qcqp;
  MetaTrainSettings meta_train;
  NavConfig nav;
  PolicyConfig policy;
  NavExperimentSettings nav_train;

  /// Throws ConfigInvalid naming the first offending key.
  void validate() const;
};

ExperimentConfig default_config(ExperimentKind kind);

/// Parses a JSON experiment file. Unknown keys and wrongly typed values are
/// rejected with ConfigInvalid naming the key. When the text has no
/// "experiment" entry, `fallback` is used; when both are given they must agree.
ExperimentConfig parse_config(std::string_view json_text, ExperimentKind fallback);
ExperimentConfig load_config(const std::string& path, ExperimentKind fallback);

/// Canonical JSON of every setting (sorted keys, round-trip reals). Parsing it
/// back yields the same config.
std::string dump_config(const ExperimentConfig& cfg);
/// FNV-1a 64 of dump_config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Output directory after applying $SAFEOPT_OUTPUT_ROOT.
std::string resolve_output_dir(const std::string& dir);

struct RunReport {
  std::string output_dir;
  /// Files written, relative to output_dir.
  std::vector<std::string> files;
};

/// Runs every seed in order, then aggregates the per-seed metric files and
/// writes manifest.json. Per-seed files live in seed_<s>/. Metric CSVs are
/// a function of (config, seed) only; wall-clock time goes to timing.csv.
/// Throws ConfigInvalid, IoFailure, or the error of a failing run.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Across-seed summary of CSV files that share one header. The first column
/// is the row key and must agree between files.
struct AggregateTable {
  std::vector<std::string> columns;  // value columns, key excluded
  std::string key_column;
  std::vector<std::string> keys;
  std::size_t n_files = 0;
  /// rows x columns
  std::vector<std::vector<double>> mean;
  /// 1.96 * stderr, with stderr from the n - 1 sample variance; 0 for one file.
  std::vector<std::vector<double>> half_width;
  /// True when the interval has no spread information (a single file).
  bool degenerate = false;

  std::vector<double> final_mean() const { return mean.empty() ? std::vector<double>{} : mean.back(); }
};

/// Throws SchemaMismatch when headers, row counts or keys differ, and
/// IoFailure for unreadable files or non-numeric cells.
AggregateTable aggregate(const std::vector<std::string>& files);

/// CSV: key,n_seeds,degenerate,<col>_mean,<col>_ci_low,<col>_ci_high,...
void write_aggregate_csv(const std::string& path, const AggregateTable& table);

}  // namespace safeopt
