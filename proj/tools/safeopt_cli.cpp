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

// Command-line front end. Talks to the library only through safeopt.h.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "safeopt/safeopt.h"

namespace {

constexpr int kUsageError = 2;

int report(so_status status) {
  if (status == SO_OK) return 0;
  std::fprintf(stderr, "safeopt: %s: %s\n", so_status_name(status), so_last_error());
  return 10 + static_cast<int>(status) % 100;
}

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<std::uint64_t> steps;
};

int run(const char* experiment, const RunOptions& opt) {
  so_config* cfg = nullptr;
  so_status st = opt.config.empty() ? so_config_new(experiment, &cfg)
                                    : so_config_load(experiment, opt.config.c_str(), &cfg);
  if (st != SO_OK) return report(st);
  if (st == SO_OK && opt.seed) st = so_config_set_seeds(cfg, &*opt.seed, 1);
  if (st == SO_OK && !opt.seeds.empty()) st = so_config_set_seeds(cfg, opt.seeds.data(), opt.seeds.size());
  if (st == SO_OK && !opt.out.empty()) st = so_config_set_output_dir(cfg, opt.out.c_str());
  if (st == SO_OK && opt.steps) st = so_config_set_steps(cfg, *opt.steps);
  char* hash = nullptr;
  if (st == SO_OK) st = so_config_hash(cfg, &hash);
  char* dir = nullptr;
  if (st == SO_OK) {
    std::fprintf(stderr, "safeopt %s: %s (config %s)\n", so_version(), experiment, hash);
    st = so_run(cfg, &dir);
  }
  if (st == SO_OK) std::printf("%s\n", dir);
  so_string_free(hash);
  so_string_free(dir);
  so_config_free(cfg);
  return report(st);
}

void add_run_command(CLI::App& app, const char* name, const char* help, RunOptions& opt, int& which, int id) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", opt.config, "JSON experiment file")->check(CLI::ExistingFile);
  sub->add_option("--seed", opt.seed, "run a single seed (overrides the config)");
  sub->add_option("--seeds", opt.seeds, "run these seeds (overrides the config)")->excludes("--seed");
  sub->add_option("--out", opt.out, "output directory (relative paths go under $SAFEOPT_OUTPUT_ROOT)");
  sub->add_option("--steps", opt.steps, "iteration budget")->check(CLI::PositiveNumber);
  sub->callback([&which, id] { which = id; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constraint-aware learned optimization experiments"};
  app.set_version_flag("--version", std::string(so_version()));
  app.require_subcommand(1);

  int which = -1;
  RunOptions qcqp, meta, nav;
  add_run_command(app, "qcqp", "compare solvers on random QCQP instances", qcqp, which, 0);
  add_run_command(app, "meta-train", "meta-train the recurrent optimizer on QCQP tasks", meta, which, 1);
  add_run_command(app, "nav-train", "train a navigation policy under cost constraints", nav, which, 2);

  std::vector<std::string> files;
  std::string agg_out;
  CLI::App* agg = app.add_subcommand("aggregate", "mean and 95% interval across per-seed CSV files");
  agg->add_option("files", files, "CSV files sharing one header")->required()->check(CLI::ExistingFile);
  agg->add_option("--out", agg_out, "output CSV")->required();
  agg->callback([&which] { which = 3; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  switch (which) {
    case 0:
      return run("qcqp", qcqp);
    case 1:
      return run("meta-train", meta);
    case 2:
      return run("nav-train", nav);
    case 3: {
      std::vector<const char*> ptrs;
      for (const std::string& f : files) ptrs.push_back(f.c_str());
      return report(so_aggregate(ptrs.data(), ptrs.size(), agg_out.c_str()));
    }
    default:
      return kUsageError;
  }
}
