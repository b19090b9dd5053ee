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

#include "safeopt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "safeopt/error.hpp"
#include "safeopt/io.hpp"

namespace safeopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Sub-stream tags for derive_seed.
constexpr std::uint64_t kQcqpEvalStream = 11;
constexpr std::uint64_t kMetaTrainStream = 12;
constexpr std::uint64_t kPhiInitStream = 13;
constexpr std::uint64_t kTrajectoryDumpStream = 14;

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  fail(ErrorCode::ConfigInvalid, "config key '" + key + "': " + why);
}

/// One JSON object of the config file. Every key read is remembered so
/// finish() can reject the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad_key(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json* find(const char* k) {
    used_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<Section> child(const char* k) {
    const json* v = find(k);
    if (!v) return std::nullopt;
    return Section(*v, key(k));
  }

  void read(const char* k, double& out) {
    if (const json* v = find(k)) out = number(*v, key(k));
  }
  void read(const char* k, std::size_t& out) {
    if (const json* v = find(k)) out = count(*v, key(k));
  }
  void read(const char* k, bool& out) {
    if (const json* v = find(k)) {
      if (!v->is_boolean()) bad_key(key(k), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* k, std::string& out) {
    if (const json* v = find(k)) {
      if (!v->is_string()) bad_key(key(k), "expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* k, Vec2& out) {
    if (const json* v = find(k)) {
      const std::vector<double> xs = numbers(*v, key(k));
      if (xs.size() != 2) bad_key(key(k), "expected two numbers");
      out = {xs[0], xs[1]};
    }
  }
  void read(const char* k, std::vector<double>& out) {
    if (const json* v = find(k)) out = numbers(*v, key(k));
  }
  void read(const char* k, Vector& out) {
    if (const json* v = find(k)) out = Vector(numbers(*v, key(k)));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) bad_key(key(it.key()), "unknown key");
    }
  }

  static double number(const json& v, const std::string& key) {
    if (!v.is_number()) bad_key(key, "expected a number");
    return v.get<double>();
  }
  static std::size_t count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad_key(key, "expected a non-negative integer");
    return v.get<std::size_t>();
  }
  static std::vector<double> numbers(const json& v, const std::string& key) {
    if (!v.is_array()) bad_key(key, "expected an array of numbers");
    std::vector<double> out;
    for (const json& x : v) out.push_back(number(x, key));
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_range(Section& s, const char* k, double& lo, double& hi) {
  Vec2 r{lo, hi};
  s.read(k, r);
  lo = r[0];
  hi = r[1];
}

std::string phi_mode_name(PhiMode m) { return m == PhiMode::Online ? "online" : "pretrained"; }

json vec_json(const Vector& v) { return json(v.values()); }

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = std::string(experiment_name(c.kind));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["slope"] = c.kappa.slope;
  j["optimizer"] = {{"hidden", c.optimizer.hidden},
                    {"layers", c.optimizer.layers},
                    {"output_scale", c.optimizer.output_scale},
                    {"preprocess_p", c.optimizer.preprocess_p}};
  j["unroll"] = {{"span", c.unroll.span},
                 {"segment", c.unroll.segment},
                 {"weights", c.unroll.weights},
                 {"beta", c.unroll.beta},
                 {"meta_lr", c.unroll.meta_lr},
                 {"batch", c.unroll.batch},
                 {"meta_rule", std::string(rule_name(c.unroll.meta_rule))},
                 {"theta_init_std", c.unroll.theta_init_std},
                 {"delta", c.unroll.delta}};
  j["baselines"] = {{"plain_lr", c.lr_plain},
                    {"adam_lr", c.lr_adam},
                    {"rmsprop_lr", c.lr_rmsprop},
                    {"policy_lr", c.nav_train.train.policy_lr}};
  std::vector<std::string> solvers;
  for (QcqpSolver s : c.qcqp.solvers) solvers.emplace_back(solver_name(s));
  const QcqpGeneratorConfig& g = c.qcqp.generator;
  j["qcqp"] = {{"n", g.n},
               {"w_eig", {g.w_eig_lo, g.w_eig_hi}},
               {"m_eig", {g.m_eig_lo, g.m_eig_hi}},
               {"r", g.r},
               {"init_distance", g.init_distance},
               {"instances", c.qcqp.instances},
               {"feasible_instances", c.qcqp.feasible_instances},
               {"steps", c.qcqp.steps},
               {"solvers", solvers},
               {"optimizer_checkpoint", c.qcqp.optimizer_checkpoint}};
  j["meta_train"] = {{"outer_steps", c.meta_train.outer_steps}};
  json obstacles = json::array();
  for (const Obstacle& o : c.nav.obstacles) obstacles.push_back({{"center", o.center}, {"radius", o.radius}});
  j["nav"] = {{"goal", c.nav.goal},
              {"obstacles", obstacles},
              {"bounds", {{"lo", c.nav.bounds_lo}, {"hi", c.nav.bounds_hi}}},
              {"start", c.nav.start},
              {"start_jitter", c.nav.start_jitter},
              {"dt", c.nav.dt},
              {"horizon", c.nav.horizon},
              {"gamma", c.nav.gamma},
              {"caps", vec_json(c.nav.cost_caps)},
              {"action_limit", c.nav.action_limit}};
  j["policy"] = {{"hidden", c.policy.hidden},
                 {"init_log_std", c.policy.init_log_std},
                 {"log_std_floor", c.policy.log_std_floor},
                 {"init_std", c.nav_train.train.policy_init_std}};
  const NavTrainSettings& t = c.nav_train.train;
  j["nav_train"] = {{"iterations", t.iterations},
                    {"trajectories", t.trajectories},
                    {"constant_baseline", t.constant_baseline},
                    {"phi_mode", phi_mode_name(t.phi_mode)},
                    {"phi_checkpoint", c.nav_train.phi_checkpoint},
                    {"projected_baseline", c.nav_train.projected_baseline}};
  return j;
}

void from_json(const json& root, ExperimentConfig& c) {
  Section top(root, "");
  if (const json* v = top.find("seeds")) {
    if (!v->is_array() || v->empty()) bad_key("seeds", "expected a non-empty array of integers");
    c.seeds.clear();
    for (const json& s : *v) c.seeds.push_back(Section::count(s, "seeds"));
  }
  top.read("output_dir", c.output_dir);
  top.read("slope", c.kappa.slope);
  top.find("experiment");  // handled by the caller

  if (auto s = top.child("optimizer")) {
    s->read("hidden", c.optimizer.hidden);
    s->read("layers", c.optimizer.layers);
    s->read("output_scale", c.optimizer.output_scale);
    s->read("preprocess_p", c.optimizer.preprocess_p);
    s->finish();
  }
  if (auto s = top.child("unroll")) {
    s->read("span", c.unroll.span);
    s->read("segment", c.unroll.segment);
    s->read("weights", c.unroll.weights);
    s->read("beta", c.unroll.beta);
    s->read("meta_lr", c.unroll.meta_lr);
    s->read("batch", c.unroll.batch);
    std::string rule(rule_name(c.unroll.meta_rule));
    s->read("meta_rule", rule);
    try {
      c.unroll.meta_rule = parse_rule(rule);
    } catch (const Error&) {
      bad_key(s->key("meta_rule"), "expected plain, adam or rmsprop");
    }
    s->read("theta_init_std", c.unroll.theta_init_std);
    s->read("delta", c.unroll.delta);
    s->finish();
  }
  if (auto s = top.child("baselines")) {
    s->read("plain_lr", c.lr_plain);
    s->read("adam_lr", c.lr_adam);
    s->read("rmsprop_lr", c.lr_rmsprop);
    s->read("policy_lr", c.nav_train.train.policy_lr);
    s->finish();
  }
  if (auto s = top.child("qcqp")) {
    QcqpGeneratorConfig& g = c.qcqp.generator;
    s->read("n", g.n);
    read_range(*s, "w_eig", g.w_eig_lo, g.w_eig_hi);
    read_range(*s, "m_eig", g.m_eig_lo, g.m_eig_hi);
    s->read("r", g.r);
    s->read("init_distance", g.init_distance);
    s->read("instances", c.qcqp.instances);
    s->read("feasible_instances", c.qcqp.feasible_instances);
    s->read("steps", c.qcqp.steps);
    if (const json* v = s->find("solvers")) {
      if (!v->is_array() || v->empty()) bad_key(s->key("solvers"), "expected a non-empty array of names");
      c.qcqp.solvers.clear();
      for (const json& name : *v) {
        if (!name.is_string()) bad_key(s->key("solvers"), "expected solver names");
        try {
          c.qcqp.solvers.push_back(parse_solver(name.get<std::string>()));
        } catch (const Error&) {
          bad_key(s->key("solvers"), "unknown solver '" + name.get<std::string>() + "'");
        }
      }
    }
    s->read("optimizer_checkpoint", c.qcqp.optimizer_checkpoint);
    s->finish();
  }
  if (auto s = top.child("meta_train")) {
    s->read("outer_steps", c.meta_train.outer_steps);
    s->finish();
  }
  if (auto s = top.child("nav")) {
    NavConfig& n = c.nav;
    s->read("goal", n.goal);
    if (const json* v = s->find("obstacles")) {
      if (!v->is_array()) bad_key(s->key("obstacles"), "expected an array");
      n.obstacles.clear();
      for (const json& o : *v) {
        Section os(o, s->key("obstacles"));
        Obstacle ob;
        os.read("center", ob.center);
        os.read("radius", ob.radius);
        os.finish();
        n.obstacles.push_back(ob);
      }
    }
    if (auto b = s->child("bounds")) {
      b->read("lo", n.bounds_lo);
      b->read("hi", n.bounds_hi);
      b->finish();
    }
    s->read("start", n.start);
    s->read("start_jitter", n.start_jitter);
    s->read("dt", n.dt);
    s->read("horizon", n.horizon);
    s->read("gamma", n.gamma);
    s->read("caps", n.cost_caps);
    s->read("action_limit", n.action_limit);
    s->finish();
  }
  if (auto s = top.child("policy")) {
    s->read("hidden", c.policy.hidden);
    s->read("init_log_std", c.policy.init_log_std);
    s->read("log_std_floor", c.policy.log_std_floor);
    s->read("init_std", c.nav_train.train.policy_init_std);
    s->finish();
  }
  if (auto s = top.child("nav_train")) {
    NavTrainSettings& t = c.nav_train.train;
    s->read("iterations", t.iterations);
    s->read("trajectories", t.trajectories);
    s->read("constant_baseline", t.constant_baseline);
    std::string mode = phi_mode_name(t.phi_mode);
    s->read("phi_mode", mode);
    if (mode == "online") {
      t.phi_mode = PhiMode::Online;
    } else if (mode == "pretrained") {
      t.phi_mode = PhiMode::Pretrained;
    } else {
      bad_key(s->key("phi_mode"), "expected online or pretrained");
    }
    s->read("phi_checkpoint", c.nav_train.phi_checkpoint);
    s->read("projected_baseline", c.nav_train.projected_baseline);
    s->finish();
  }
  top.finish();
}

void positive(double v, const char* key) {
  if (!(v > 0.0) || !std::isfinite(v)) bad_key(key, "must be positive");
}

// --- output helpers ---------------------------------------------------------

class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::vector<std::string>& header) : out_(path), path_(path) {
    require(out_.is_open(), ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  ~CsvFile() = default;

  template <typename Key>
  void row(const Key& key, const std::vector<double>& values) {
    out_ << key;
    for (double v : values) out_ << ',' << format_real(v);
    out_ << '\n';
  }
  void close() {
    out_.close();
    require(!out_.fail(), ErrorCode::IoFailure, "write to '" + path_.string() + "' failed");
  }

 private:
  std::ofstream out_;
  fs::path path_;
};

struct SeedContext {
  std::uint64_t seed;
  fs::path dir;
  std::string rel;  // "seed_<s>"
  std::vector<std::string>* files;

  fs::path file(const std::string& name) const {
    files->push_back(rel + "/" + name);
    return dir / name;
  }
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// --- experiments --------------------------------------------------------------

void run_qcqp_seed(const ExperimentConfig& cfg, const SeedContext& ctx) {
  const auto start = std::chrono::steady_clock::now();
  std::optional<RecurrentOptimizer> opt;
  for (QcqpSolver s : cfg.qcqp.solvers) {
    if (s == QcqpSolver::Fisar && !opt) opt = RecurrentOptimizer::load_file(resolve_output_dir(cfg.qcqp.optimizer_checkpoint));
  }
  QcqpBenchmarkSettings bench;
  bench.beta = cfg.unroll.beta;
  bench.slope = cfg.kappa.slope;
  bench.delta = cfg.unroll.delta;
  bench.lr_plain = cfg.lr_plain;
  bench.lr_adam = cfg.lr_adam;
  bench.lr_rmsprop = cfg.lr_rmsprop;

  const std::size_t ns = cfg.qcqp.solvers.size();
  const std::size_t steps = cfg.qcqp.steps;
  std::vector<std::string> header{"step"};
  for (QcqpSolver s : cfg.qcqp.solvers) {
    header.push_back(std::string(solver_name(s)) + "_objective");
    header.push_back(std::string(solver_name(s)) + "_violation");
  }
  // mean over infeasible-start instances, per step and solver
  std::vector<std::vector<double>> mean(steps + 1, std::vector<double>(2 * ns, 0.0));

  CsvFile curves(ctx.file("curves.csv"), {"instance", "step", "solver", "objective", "violation"});
  CsvFile finals(ctx.file("final.csv"),
                 {"instance", "kind", "solver", "initial_objective", "final_objective", "final_violation"});
  Rng rng(derive_seed(ctx.seed, kQcqpEvalStream));
  const std::size_t total = cfg.qcqp.instances + cfg.qcqp.feasible_instances;
  for (std::size_t i = 0; i < total; ++i) {
    QcqpInstance inst = sample_infeasible_start(cfg.qcqp.generator, rng);
    const bool feasible_opt = i >= cfg.qcqp.instances;
    if (feasible_opt) place_feasible_minimizer(inst, rng);
    const std::vector<QcqpCurvePoint> curve =
        run_qcqp_benchmark(inst, cfg.qcqp.solvers, steps, bench, opt ? &*opt : nullptr);
    std::map<QcqpSolver, double> initial;
    for (const QcqpCurvePoint& p : curve) {
      const std::size_t si = static_cast<std::size_t>(
          std::find(cfg.qcqp.solvers.begin(), cfg.qcqp.solvers.end(), p.solver) - cfg.qcqp.solvers.begin());
      if (p.step == 0) initial[p.solver] = p.objective;
      if (!feasible_opt) {
        curves.row(std::to_string(i) + "," + std::to_string(p.step) + "," + std::string(solver_name(p.solver)),
                   {p.objective, p.violation});
        mean[p.step][2 * si] += p.objective;
        mean[p.step][2 * si + 1] += p.violation;
      }
      if (p.step == steps) {
        finals.row(std::to_string(i) + "," + (feasible_opt ? "feasible_optimum" : "infeasible_start") + "," +
                       std::string(solver_name(p.solver)),
                   {initial[p.solver], p.objective, p.violation});
      }
    }
  }
  curves.close();
  finals.close();

  CsvFile metrics(ctx.file("metrics.csv"), header);
  const double inv = cfg.qcqp.instances ? 1.0 / static_cast<double>(cfg.qcqp.instances) : 0.0;
  for (std::size_t k = 0; k <= steps; ++k) {
    for (double& v : mean[k]) v *= inv;
    metrics.row(k, mean[k]);
  }
  metrics.close();
  CsvFile timing(ctx.file("timing.csv"), {"phase", "wall_ms"});
  timing.row("total", {elapsed_ms(start)});
  timing.close();
}

TaskSampler qcqp_sampler(const QcqpGeneratorConfig& gen) {
  return [gen](Rng& rng) -> std::unique_ptr<InnerProblem> {
    return std::make_unique<QcqpProblem>(sample_qcqp(gen, rng));
  };
}

void run_meta_train_seed(const ExperimentConfig& cfg, const SeedContext& ctx) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(derive_seed(ctx.seed, kMetaTrainStream));
  RecurrentOptimizer opt = RecurrentOptimizer::random(cfg.optimizer, rng);
  MetaTrainLog log;
  opt = train_meta(std::move(opt), qcqp_sampler(cfg.qcqp.generator), cfg.unroll, cfg.kappa,
                   cfg.meta_train.outer_steps, rng, &log);
  CsvFile metrics(ctx.file("metrics.csv"), {"iteration", "loss"});
  for (std::size_t k = 0; k < log.losses.size(); ++k) metrics.row(k + 1, {log.losses[k]});
  metrics.close();
  CsvFile summary(ctx.file("summary.csv"), {"outer_steps", "discarded_batches"});
  summary.row(cfg.meta_train.outer_steps, {static_cast<double>(log.failures)});
  summary.close();
  opt.save_file(ctx.file("phi.txt").string());
  CsvFile timing(ctx.file("timing.csv"), {"phase", "wall_ms"});
  timing.row("total", {elapsed_ms(start)});
  timing.close();
}

std::vector<std::string> nav_header(std::size_t channels) {
  std::vector<std::string> h{"iteration", "return"};
  for (std::size_t i = 0; i < channels; ++i) h.push_back("constraint_" + std::to_string(i));
  for (std::size_t i = 0; i < channels; ++i) h.push_back("violation_" + std::to_string(i));
  h.push_back("violation_total");
  return h;
}

void write_nav_run(const SeedContext& ctx, const std::string& prefix, const NavRunResult& run, std::size_t channels) {
  CsvFile metrics(ctx.file(prefix + "metrics.csv"), nav_header(channels));
  for (std::size_t k = 0; k < run.curve.size(); ++k) {
    const NavIteration& it = run.curve[k];
    std::vector<double> row{it.J};
    for (std::size_t i = 0; i < channels; ++i) row.push_back(it.C[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < channels; ++i) {
      row.push_back(std::max(it.C[i], 0.0));
      total += std::max(it.C[i], 0.0);
    }
    row.push_back(total);
    metrics.row(k, row);
  }
  metrics.close();
  CsvFile timing(ctx.file(prefix + "timing.csv"), {"iteration", "wall_ms"});
  for (std::size_t k = 0; k < run.wall_ms.size(); ++k) timing.row(k, {run.wall_ms[k]});
  timing.close();
}

void dump_final_policy(const ExperimentConfig& cfg, const SeedContext& ctx, const std::string& prefix,
                       const Vector& theta) {
  GaussianMlpPolicy pol(cfg.policy);
  pol.set_flat(theta);
  pol.save_file(ctx.file(prefix + "policy.txt").string());
  Rng rng(derive_seed(ctx.seed, kTrajectoryDumpStream));
  const Trajectory traj = rollout(cfg.nav, pol.action_fn(), rng);
  std::ofstream out(ctx.file(prefix + "trajectory.csv"));
  require(out.is_open(), ErrorCode::IoFailure, "cannot write trajectory dump");
  write_trajectory_csv(out, traj);
}

void run_nav_seed(const ExperimentConfig& cfg, const SeedContext& ctx) {
  const NavTrainSettings& t = cfg.nav_train.train;
  RecurrentOptimizer phi = t.phi_mode == PhiMode::Pretrained
                               ? RecurrentOptimizer::load_file(resolve_output_dir(cfg.nav_train.phi_checkpoint))
                               : [&] {
                                   Rng rng(derive_seed(ctx.seed, kPhiInitStream));
                                   return RecurrentOptimizer::random(cfg.optimizer, rng);
                                 }();
  const std::size_t channels = cfg.nav.channels();
  const NavRunResult fisar =
      train_nav(NavMethod::Fisar, cfg.nav, cfg.policy, t, cfg.unroll, cfg.kappa, &phi, ctx.seed);
  write_nav_run(ctx, "", fisar, channels);
  dump_final_policy(cfg, ctx, "final_", fisar.final_theta);
  if (t.phi_mode == PhiMode::Online && fisar.phi) fisar.phi->save_file(ctx.file("phi_final.txt").string());

  if (cfg.nav_train.projected_baseline) {
    const NavRunResult base =
        train_nav(NavMethod::ProjectedGradient, cfg.nav, cfg.policy, t, cfg.unroll, cfg.kappa, nullptr, ctx.seed);
    write_nav_run(ctx, "projected_", base, channels);
    dump_final_policy(cfg, ctx, "projected_final_", base.final_theta);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string_view experiment_name(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::Qcqp:
      return "qcqp";
    case ExperimentKind::MetaTrain:
      return "meta-train";
    case ExperimentKind::NavTrain:
      return "nav-train";
  }
  return "unknown";
}

ExperimentKind parse_experiment(std::string_view name) {
  for (ExperimentKind k : {ExperimentKind::Qcqp, ExperimentKind::MetaTrain, ExperimentKind::NavTrain}) {
    if (experiment_name(k) == name) return k;
  }
  bad_key("experiment", "unknown experiment '" + std::string(name) + "' (expected qcqp, meta-train or nav-train)");
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.output_dir = "runs/" + std::string(experiment_name(kind));
  return c;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) bad_key("seeds", "at least one seed is required");
  if (output_dir.empty()) bad_key("output_dir", "must not be empty");
  positive(kappa.slope, "slope");
  if (optimizer.hidden < 1) bad_key("optimizer.hidden", "must be >= 1");
  if (optimizer.layers < 1) bad_key("optimizer.layers", "must be >= 1");
  positive(optimizer.output_scale, "optimizer.output_scale");
  positive(optimizer.preprocess_p, "optimizer.preprocess_p");
  if (unroll.span < 1) bad_key("unroll.span", "must be >= 1");
  if (unroll.segment < 1) bad_key("unroll.segment", "must be >= 1");
  positive(unroll.beta, "unroll.beta");
  positive(unroll.meta_lr, "unroll.meta_lr");
  if (unroll.batch < 1) bad_key("unroll.batch", "must be >= 1");
  if (!(unroll.theta_init_std >= 0.0)) bad_key("unroll.theta_init_std", "must be >= 0");
  positive(unroll.delta, "unroll.delta");
  if (!unroll.weights.empty() && unroll.weights.size() != unroll.span)
    bad_key("unroll.weights", "needs one entry per step of the span (or none)");
  for (double w : unroll.weights) positive(w, "unroll.weights");
  positive(lr_plain, "baselines.plain_lr");
  positive(lr_adam, "baselines.adam_lr");
  positive(lr_rmsprop, "baselines.rmsprop_lr");
  positive(nav_train.train.policy_lr, "baselines.policy_lr");

  const QcqpGeneratorConfig& g = qcqp.generator;
  if (g.n < 1) bad_key("qcqp.n", "must be >= 1");
  if (!(g.w_eig_lo > 0.0 && g.w_eig_lo <= g.w_eig_hi)) bad_key("qcqp.w_eig", "needs 0 < lo <= hi");
  if (!(g.m_eig_lo <= g.m_eig_hi)) bad_key("qcqp.m_eig", "needs lo <= hi");
  if (!(g.m_eig_hi > 0.0)) bad_key("qcqp.m_eig", "hi must be positive so infeasible starts exist");
  positive(g.r, "qcqp.r");
  positive(g.init_distance, "qcqp.init_distance");
  if (qcqp.solvers.empty()) bad_key("qcqp.solvers", "must not be empty");
  if (meta_train.outer_steps < 1) bad_key("meta_train.outer_steps", "must be >= 1");

  try {
    nav.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config key ") + e.what());
  }
  if (policy.hidden < 1) bad_key("policy.hidden", "must be >= 1");
  if (!std::isfinite(policy.init_log_std)) bad_key("policy.init_log_std", "must be finite");
  if (!std::isfinite(policy.log_std_floor)) bad_key("policy.log_std_floor", "must be finite");
  const NavTrainSettings& t = nav_train.train;
  if (t.iterations < 1) bad_key("nav_train.iterations", "must be >= 1");
  if (t.trajectories < 1) bad_key("nav_train.trajectories", "must be >= 1");
  if (!(t.policy_init_std >= 0.0)) bad_key("policy.init_std", "must be >= 0");
}

ExperimentConfig parse_config(std::string_view json_text, ExperimentKind fallback) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) bad_key("<root>", "expected an object");
  ExperimentKind kind = fallback;
  if (const auto it = root.find("experiment"); it != root.end()) {
    if (!it->is_string()) bad_key("experiment", "expected a string");
    kind = parse_experiment(it->get<std::string>());
    if (kind != fallback)
      bad_key("experiment", "file is for '" + std::string(experiment_name(kind)) + "' but '" +
                                std::string(experiment_name(fallback)) + "' was requested");
  }
  ExperimentConfig cfg = default_config(kind);
  from_json(root, cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, ExperimentKind fallback) {
  std::ifstream in(path);
  require(in.is_open(), ErrorCode::IoFailure, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), fallback);
}

std::string dump_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string resolve_output_dir(const std::string& dir) {
  const fs::path p(dir);
  const char* root = std::getenv("SAFEOPT_OUTPUT_ROOT");
  if (p.is_absolute() || root == nullptr || *root == '\0') return p.lexically_normal().string();
  return (fs::path(root) / p).lexically_normal().string();
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  // Checkpoints are only needed to run, so a bare config still parses.
  if (cfg.kind == ExperimentKind::Qcqp && cfg.qcqp.optimizer_checkpoint.empty() &&
      std::find(cfg.qcqp.solvers.begin(), cfg.qcqp.solvers.end(), QcqpSolver::Fisar) != cfg.qcqp.solvers.end())
    bad_key("qcqp.optimizer_checkpoint", "required when the solver list contains fisar");
  if (cfg.kind == ExperimentKind::NavTrain && cfg.nav_train.train.phi_mode == PhiMode::Pretrained &&
      cfg.nav_train.phi_checkpoint.empty())
    bad_key("nav_train.phi_checkpoint", "required when phi_mode is pretrained");
  RunReport report;
  report.output_dir = resolve_output_dir(cfg.output_dir);
  const fs::path root(report.output_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  require(!ec, ErrorCode::IoFailure, "cannot create output directory '" + root.string() + "': " + ec.message());

  std::map<std::string, std::vector<std::string>> metric_files;  // name -> per-seed paths
  for (std::uint64_t seed : cfg.seeds) {
    const std::string rel = "seed_" + std::to_string(seed);
    SeedContext ctx{seed, root / rel, rel, &report.files};
    fs::create_directories(ctx.dir, ec);
    require(!ec, ErrorCode::IoFailure, "cannot create '" + ctx.dir.string() + "': " + ec.message());
    const std::size_t first = report.files.size();
    switch (cfg.kind) {
      case ExperimentKind::Qcqp:
        run_qcqp_seed(cfg, ctx);
        break;
      case ExperimentKind::MetaTrain:
        run_meta_train_seed(cfg, ctx);
        break;
      case ExperimentKind::NavTrain:
        run_nav_seed(cfg, ctx);
        break;
    }
    for (std::size_t i = first; i < report.files.size(); ++i) {
      const std::string name = fs::path(report.files[i]).filename().string();
      if (name.size() >= 11 && name.compare(name.size() - 11, 11, "metrics.csv") == 0)
        metric_files[name].push_back((root / report.files[i]).string());
    }
  }

  for (const auto& [name, files] : metric_files) {
    const std::string out = "aggregate_" + name;
    write_aggregate_csv((root / out).string(), aggregate(files));
    report.files.push_back(out);
  }

  json manifest;
  manifest["experiment"] = std::string(experiment_name(cfg.kind));
  manifest["config"] = to_json(cfg);
  manifest["config_hash"] = config_hash(cfg);
  manifest["seeds"] = cfg.seeds;
  manifest["version"] = SAFEOPT_VERSION;
  manifest["files"] = report.files;
  std::ofstream out(root / "manifest.json");
  require(out.is_open(), ErrorCode::IoFailure, "cannot write manifest.json");
  out << manifest.dump(2) << '\n';
  report.files.push_back("manifest.json");
  return report;
}

AggregateTable aggregate(const std::vector<std::string>& files) {
  require(!files.empty(), ErrorCode::SchemaMismatch, "aggregate: no input files");
  AggregateTable t;
  std::vector<std::vector<std::vector<double>>> data;  // file -> row -> column
  std::vector<std::string> header;
  for (const std::string& path : files) {
    std::ifstream in(path);
    require(in.is_open(), ErrorCode::IoFailure, "aggregate: cannot open '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaMismatch,
            "aggregate: '" + path + "' has no header");
    const std::vector<std::string> h = split_csv_line(line);
    require(h.size() >= 2, ErrorCode::SchemaMismatch, "aggregate: '" + path + "' needs a key and a value column");
    if (header.empty()) {
      header = h;
    } else {
      require(h == header, ErrorCode::SchemaMismatch, "aggregate: columns of '" + path + "' differ from '" +
                                                          files.front() + "'");
    }
    std::vector<std::vector<double>> rows;
    std::size_t r = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> cells = split_csv_line(line);
      require(cells.size() == header.size(), ErrorCode::SchemaMismatch,
              "aggregate: row " + std::to_string(r + 1) + " of '" + path + "' has the wrong number of cells");
      if (data.empty()) {
        t.keys.push_back(cells[0]);
      } else {
        require(r < t.keys.size() && cells[0] == t.keys[r], ErrorCode::SchemaMismatch,
                "aggregate: row keys of '" + path + "' differ from '" + files.front() + "'");
      }
      std::vector<double> values;
      for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_real(cells[c]));
      rows.push_back(std::move(values));
      ++r;
    }
    require(rows.size() == t.keys.size(), ErrorCode::SchemaMismatch,
            "aggregate: '" + path + "' has " + std::to_string(rows.size()) + " rows, expected " +
                std::to_string(t.keys.size()));
    data.push_back(std::move(rows));
  }

  t.key_column = header.front();
  t.columns.assign(header.begin() + 1, header.end());
  t.n_files = files.size();
  t.degenerate = t.n_files < 2;
  const double n = static_cast<double>(t.n_files);
  for (std::size_t r = 0; r < t.keys.size(); ++r) {
    std::vector<double> mean(t.columns.size()), half(t.columns.size());
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      double sum = 0.0;
      for (const auto& f : data) sum += f[r][c];
      const double m = sum / n;
      double ss = 0.0;
      for (const auto& f : data) ss += (f[r][c] - m) * (f[r][c] - m);
      mean[c] = m;
      half[c] = t.degenerate ? 0.0 : 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    t.mean.push_back(std::move(mean));
    t.half_width.push_back(std::move(half));
  }
  return t;
}

void write_aggregate_csv(const std::string& path, const AggregateTable& table) {
  std::vector<std::string> header{table.key_column, "n_seeds", "degenerate"};
  for (const std::string& c : table.columns) {
    header.push_back(c + "_mean");
    header.push_back(c + "_ci_low");
    header.push_back(c + "_ci_high");
  }
  CsvFile out(path, header);
  for (std::size_t r = 0; r < table.keys.size(); ++r) {
    std::vector<double> row;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      row.push_back(table.mean[r][c]);
      row.push_back(table.mean[r][c] - table.half_width[r][c]);
      row.push_back(table.mean[r][c] + table.half_width[r][c]);
    }
    out.row(table.keys[r] + "," + std::to_string(table.n_files) + "," + (table.degenerate ? "1" : "0"), row);
  }
  out.close();
}

}  // namespace safeopt
