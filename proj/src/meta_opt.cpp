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

#include "safeopt/meta_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

#include "safeopt/error.hpp"
#include "safeopt/io.hpp"
#include "safeopt/projection.hpp"

namespace safeopt {

namespace {

constexpr const char* kCheckpointMagic = "safeopt-recurrent-optimizer";
constexpr int kCheckpointVersion = 1;

Matrix uniform_matrix(std::size_t r, std::size_t c, double bound, Rng& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix as_column(const Vector& v) { return Matrix::column(v); }

Vector column_values(const Matrix& m) { return Vector(std::span<const double>(m.data(), m.size())); }

}  // namespace

RecurrentOptimizer::RecurrentOptimizer(RecurrentOptimizerConfig cfg) : cfg_(cfg) {
  require(cfg_.hidden >= 1, ErrorCode::InvalidArgument, "recurrent optimizer: hidden size must be >= 1");
  require(cfg_.layers >= 1, ErrorCode::InvalidArgument, "recurrent optimizer: layer count must be >= 1");
  require(std::isfinite(cfg_.output_scale), ErrorCode::InvalidArgument,
          "recurrent optimizer: output scale must be finite");
  require(cfg_.preprocess_p > 0.0, ErrorCode::InvalidArgument,
          "recurrent optimizer: preprocessing clamp must be positive");
  const std::size_t h = cfg_.hidden;
  layers_.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t in = l == 0 ? 2 : h;
    for (std::size_t g = 0; g < 4; ++g) {
      layers_[l].wx[g] = Matrix(in, h);
      layers_[l].wh[g] = Matrix(h, h);
      layers_[l].b[g] = Matrix(1, h);
    }
  }
  head_w_ = Matrix(h, 1);
  head_b_ = Matrix(1, 1);
}

RecurrentOptimizer RecurrentOptimizer::random(RecurrentOptimizerConfig cfg, Rng& rng) {
  RecurrentOptimizer opt(cfg);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  opt.for_each_block([&](Matrix& m) { m = uniform_matrix(m.rows(), m.cols(), bound, rng); });
  opt.head_b_ = Matrix(1, 1);
  return opt;
}

template <typename F>
void RecurrentOptimizer::for_each_block(F&& f) {
  for (LstmLayer& layer : layers_) {
    for (std::size_t g = 0; g < 4; ++g) {
      f(layer.wx[g]);
      f(layer.wh[g]);
      f(layer.b[g]);
    }
  }
  f(head_w_);
  f(head_b_);
}

template <typename F>
void RecurrentOptimizer::for_each_block(F&& f) const {
  for (const LstmLayer& layer : layers_) {
    for (std::size_t g = 0; g < 4; ++g) {
      f(layer.wx[g]);
      f(layer.wh[g]);
      f(layer.b[g]);
    }
  }
  f(head_w_);
  f(head_b_);
}

std::size_t RecurrentOptimizer::parameter_count() const noexcept {
  std::size_t total = 0;
  for_each_block([&](const Matrix& m) { total += m.size(); });
  return total;
}

Vector RecurrentOptimizer::flat() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_block([&](const Matrix& m) { out.insert(out.end(), m.values().begin(), m.values().end()); });
  return Vector(std::move(out));
}

void RecurrentOptimizer::set_flat(const Vector& values) {
  require(values.size() == parameter_count(), ErrorCode::DimensionMismatch,
          "recurrent optimizer: expected " + std::to_string(parameter_count()) + " parameters, got " +
              std::to_string(values.size()));
  std::size_t pos = 0;
  for_each_block([&](Matrix& m) {
    std::copy_n(values.values().begin() + static_cast<std::ptrdiff_t>(pos), m.size(), m.data());
    pos += m.size();
  });
}

bool RecurrentOptimizer::all_finite() const noexcept {
  bool ok = true;
  for_each_block([&](const Matrix& m) { ok = ok && m.all_finite(); });
  return ok;
}

void RecurrentOptimizer::save(std::ostream& out) const {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "hidden " << cfg_.hidden << '\n';
  out << "layers " << cfg_.layers << '\n';
  out << "output_scale " << format_real(cfg_.output_scale) << '\n';
  out << "preprocess_p " << format_real(cfg_.preprocess_p) << '\n';
  const Vector values = flat();
  out << "count " << values.size() << '\n';
  for (double v : values.values()) out << format_real(v) << '\n';
  require(out.good(), ErrorCode::IoFailure, "checkpoint: write failed");
}

RecurrentOptimizer RecurrentOptimizer::load(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  require(in.good() && magic == kCheckpointMagic, ErrorCode::SchemaMismatch,
          "checkpoint: not a recurrent optimizer checkpoint");
  require(version == kCheckpointVersion, ErrorCode::SchemaMismatch,
          "checkpoint: unsupported version " + std::to_string(version));
  auto field = [&](const char* name) {
    std::string key, value;
    in >> key >> value;
    require(in.good() && key == name, ErrorCode::SchemaMismatch,
            std::string("checkpoint: expected field '") + name + "'");
    return value;
  };
  RecurrentOptimizerConfig cfg;
  cfg.hidden = std::stoul(field("hidden"));
  cfg.layers = std::stoul(field("layers"));
  cfg.output_scale = parse_real(field("output_scale"));
  cfg.preprocess_p = parse_real(field("preprocess_p"));
  const std::size_t count = std::stoul(field("count"));
  RecurrentOptimizer opt(cfg);
  require(count == opt.parameter_count(), ErrorCode::SchemaMismatch,
          "checkpoint: parameter count does not match the stored shape");
  std::vector<double> values(count);
  std::string token;
  for (std::size_t i = 0; i < count; ++i) {
    in >> token;
    require(!in.fail(), ErrorCode::IoFailure, "checkpoint: truncated parameter list");
    values[i] = parse_real(token);
  }
  opt.set_flat(Vector(std::move(values)));
  return opt;
}

void RecurrentOptimizer::save_file(const std::string& path) const {
  std::ofstream out(path);
  require(out.is_open(), ErrorCode::IoFailure, "checkpoint: cannot open '" + path + "' for writing");
  save(out);
}

RecurrentOptimizer RecurrentOptimizer::load_file(const std::string& path) {
  std::ifstream in(path);
  require(in.is_open(), ErrorCode::IoFailure, "checkpoint: cannot open '" + path + "'");
  return load(in);
}

CoordOptimizerState CoordOptimizerState::zeros(std::size_t n, const RecurrentOptimizerConfig& cfg) {
  CoordOptimizerState s;
  s.h.assign(cfg.layers, Matrix(n, cfg.hidden));
  s.c.assign(cfg.layers, Matrix(n, cfg.hidden));
  return s;
}

bool CoordOptimizerState::all_finite() const noexcept {
  for (const Matrix& m : h)
    if (!m.all_finite()) return false;
  for (const Matrix& m : c)
    if (!m.all_finite()) return false;
  return true;
}

Matrix preprocess_gradient(const Vector& grad, double p) {
  Matrix out(grad.size(), 2);
  const double floor = std::exp(-p);
  const double lift = std::exp(p);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    if (std::abs(g) >= floor) {
      out(i, 0) = std::log(std::abs(g)) / p;
      out(i, 1) = g > 0.0 ? 1.0 : -1.0;
    } else {
      out(i, 0) = -1.0;
      out(i, 1) = lift * g;
    }
  }
  return out;
}

std::vector<Var> CellVars::all() const {
  std::vector<Var> out;
  const std::size_t layers = wx.size() / 4;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t g = 0; g < 4; ++g) {
      out.push_back(wx[4 * l + g]);
      out.push_back(wh[4 * l + g]);
      out.push_back(b[4 * l + g]);
    }
  }
  out.push_back(head_w);
  out.push_back(head_b);
  return out;
}

CellVars record_cell_parameters(Tape& tape, const RecurrentOptimizer& opt, std::size_t n, bool trainable) {
  auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  CellVars v;
  for (const LstmLayer& layer : opt.layers()) {
    for (std::size_t g = 0; g < 4; ++g) {
      v.wx.push_back(leaf(layer.wx[g]));
      v.wh.push_back(leaf(layer.wh[g]));
      v.b.push_back(leaf(layer.b[g]));
    }
  }
  v.head_w = leaf(opt.head_w());
  v.head_b = leaf(opt.head_b());
  v.ones = tape.constant(Matrix(n, 1, 1.0));
  return v;
}

Var record_cell_step(Tape& tape, const CellVars& vars, const RecurrentOptimizerConfig& cfg, Var input,
                     std::vector<Var>& h, std::vector<Var>& c) {
  Var x = input;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    std::array<Var, 4> pre;
    for (std::size_t g = 0; g < 4; ++g) {
      const std::size_t idx = 4 * l + g;
      pre[g] = tape.add(tape.add(tape.matmul(x, vars.wx[idx]), tape.matmul(h[l], vars.wh[idx])),
                        tape.matmul(vars.ones, vars.b[idx]));
    }
    const Var i = tape.sigmoid(pre[kInput]);
    const Var f = tape.sigmoid(pre[kForget]);
    const Var g = tape.tanh(pre[kCell]);
    const Var o = tape.sigmoid(pre[kOutput]);
    c[l] = tape.add(tape.mul(f, c[l]), tape.mul(i, g));
    h[l] = tape.mul(o, tape.tanh(c[l]));
    x = h[l];
  }
  const Var head = tape.add(tape.matmul(x, vars.head_w), tape.matmul(vars.ones, vars.head_b));
  return tape.scale(head, cfg.output_scale);
}

OptimizerStepResult optimizer_step(const RecurrentOptimizer& opt, const Vector& grad,
                                   const CoordOptimizerState& state) {
  const RecurrentOptimizerConfig& cfg = opt.config();
  const std::size_t n = grad.size();
  require(grad.all_finite(), ErrorCode::NonFiniteInput, "optimizer_step: non-finite gradient");
  require(state.h.size() == cfg.layers && state.c.size() == cfg.layers, ErrorCode::DimensionMismatch,
          "optimizer_step: state has the wrong layer count");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    require(state.h[l].rows() == n && state.h[l].cols() == cfg.hidden && state.c[l].same_shape(state.h[l]),
            ErrorCode::DimensionMismatch,
            "optimizer_step: state built for " + std::to_string(state.h[l].rows()) + " coordinates, gradient has " +
                std::to_string(n));
  }
  Tape tape;
  const CellVars vars = record_cell_parameters(tape, opt, n, false);
  std::vector<Var> h, c;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    h.push_back(tape.constant(state.h[l]));
    c.push_back(tape.constant(state.c[l]));
  }
  const Var raw = record_cell_step(tape, vars, cfg, tape.constant(preprocess_gradient(grad, cfg.preprocess_p)), h, c);
  OptimizerStepResult out{column_values(tape.value(raw)), {}};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    out.state.h.push_back(tape.value(h[l]));
    out.state.c.push_back(tape.value(c[l]));
  }
  return out;
}

double UnrollConfig::weight(std::size_t k) const {
  if (weights.empty()) return 1.0;
  return weights[std::min(k, weights.size()) - 1];
}

void UnrollConfig::validate() const {
  require(span >= 1, ErrorCode::InvalidArgument, "unroll: span must be >= 1");
  require(segment >= 1, ErrorCode::InvalidArgument, "unroll: segment must be >= 1");
  require(beta > 0.0 && std::isfinite(beta), ErrorCode::InvalidArgument, "unroll: beta must be positive");
  require(meta_lr > 0.0 && std::isfinite(meta_lr), ErrorCode::InvalidArgument,
          "unroll: meta_lr must be positive");
  require(batch >= 1, ErrorCode::InvalidArgument, "unroll: batch must be >= 1");
  require(theta_init_std >= 0.0, ErrorCode::InvalidArgument, "unroll: theta_init_std must be >= 0");
  require(delta > 0.0, ErrorCode::InvalidArgument, "unroll: delta must be positive");
  require(weights.empty() || weights.size() == span, ErrorCode::InvalidArgument,
          "unroll: weights must have one entry per step");
  for (double w : weights) require(w > 0.0, ErrorCode::InvalidArgument, "unroll: weights must be positive");
}

UnrollSession::UnrollSession(InnerProblem& problem, Vector theta0, const RecurrentOptimizerConfig& cfg)
    : problem_(problem), theta_(std::move(theta0)), state_(CoordOptimizerState::zeros(theta_.size(), cfg)) {
  require(theta_.size() == problem_.dim(), ErrorCode::DimensionMismatch,
          "unroll: initial point has the wrong dimension");
}

const InnerEval& UnrollSession::current() {
  if (!cached_) {
    cached_ = std::make_unique<InnerEval>(problem_.evaluate(theta_));
    require(std::isfinite(cached_->objective), ErrorCode::NonFiniteLoss, "unroll: objective is not finite");
  }
  return *cached_;
}

SegmentResult UnrollSession::run_segment(const RecurrentOptimizer& opt, const UnrollConfig& cfg,
                                         const KappaFn& kappa, std::size_t steps, bool with_gradient) {
  const RecurrentOptimizerConfig& ocfg = opt.config();
  require(state_.h.size() == ocfg.layers && (state_.h.empty() || state_.h[0].cols() == ocfg.hidden),
          ErrorCode::DimensionMismatch, "unroll: optimizer shape changed mid-unroll");
  const std::size_t n = theta_.size();
  SegmentResult result;
  result.max_polytope_residual = -INFINITY;

  // The no-gradient path steps the state directly; the gradient path keeps
  // the whole segment on one tape for the reverse pass.
  Tape tape;
  CellVars vars;
  std::vector<Var> h, c;
  if (with_gradient) {
    vars = record_cell_parameters(tape, opt, n, true);
    for (std::size_t l = 0; l < ocfg.layers; ++l) {
      h.push_back(tape.constant(state_.h[l]));
      c.push_back(tape.constant(state_.c[l]));
    }
  }

  std::vector<Var> raw_vars;
  std::vector<ProjectionMetric> metrics;
  std::vector<Vector> post_grads;
  std::vector<double> post_weights;

  for (std::size_t k = 0; k < steps; ++k) {
    const InnerEval& ev = current();
    require(ev.objective_grad.size() == n, ErrorCode::DimensionMismatch, "unroll: gradient has the wrong size");
    require(ev.objective_grad.all_finite(), ErrorCode::NonFiniteInput, "unroll: non-finite objective gradient");

    Vector raw;
    if (with_gradient) {
      const Var input = tape.constant(preprocess_gradient(ev.objective_grad, ocfg.preprocess_p));
      const Var raw_var = record_cell_step(tape, vars, ocfg, input, h, c);
      raw = column_values(tape.value(raw_var));
      raw_vars.push_back(raw_var);
    } else {
      OptimizerStepResult step = optimizer_step(opt, ev.objective_grad, state_);
      raw = std::move(step.raw_dir);
      state_ = std::move(step.state);
    }
    require(raw.all_finite(), ErrorCode::NonFiniteLoss, "unroll: optimizer output is not finite");

    UpdateConstraints uc = prepare_update_constraints(ev.constraints, kappa, cfg.delta);
    Vector dir = project(uc.metric, raw, uc.poly.b).x;
    const Vector lhs = matvec(uc.poly.A, dir);
    for (std::size_t i = 0; i < lhs.size(); ++i)
      result.max_polytope_residual = std::max(result.max_polytope_residual, lhs[i] - uc.poly.b[i]);

    Vector next = theta_;
    axpy(cfg.beta, dir, next);
    result.records.push_back({theta_, ev.objective_grad, std::move(uc.poly), std::move(raw), std::move(dir)});
    if (with_gradient) metrics.push_back(std::move(uc.metric));

    theta_ = std::move(next);
    ++steps_done_;
    cached_.reset();
    const InnerEval& post = current();
    const double w = cfg.weight(steps_done_);
    result.objectives.push_back(post.objective);
    result.loss -= w * post.objective;
    if (with_gradient) {
      require(post.objective_grad.all_finite(), ErrorCode::NonFiniteInput, "unroll: non-finite objective gradient");
      post_grads.push_back(post.objective_grad);
      post_weights.push_back(w);
    }
  }

  if (steps == 0) result.max_polytope_residual = 0.0;
  if (!with_gradient) return result;
  for (std::size_t l = 0; l < ocfg.layers; ++l) {
    state_.h[l] = tape.value(h[l]);
    state_.c[l] = tape.value(c[l]);
  }

  // Reverse sweep over theta adjoints, then one pass through the cell stack
  // with the projected adjoints as output seeds.
  Vector adjoint(n);
  std::optional<Var> surrogate;
  for (std::size_t k = steps; k-- > 0;) {
    axpy(-post_weights[k], post_grads[k], adjoint);
    const StepRecord& rec = result.records[k];
    Vector seed = project_vjp(metrics[k], rec.raw_dir, rec.poly.b, adjoint);
    seed *= cfg.beta;
    const Var term = tape.sum(tape.mul(raw_vars[k], tape.constant(as_column(seed))));
    surrogate = surrogate ? tape.add(*surrogate, term) : term;
  }
  if (surrogate) {
    tape.backward(*surrogate);
    const std::vector<Var> params = vars.all();
    result.phi_grad = tape.gradient(params);
  } else {
    result.phi_grad = Vector(opt.parameter_count());
  }
  return result;
}

UnrollResult unroll_loss(const RecurrentOptimizer& opt, InnerProblem& problem, const Vector& theta0,
                         const UnrollConfig& cfg, const KappaFn& kappa) {
  cfg.validate();
  UnrollSession session(problem, theta0, opt.config());
  SegmentResult r = session.run_segment(opt, cfg, kappa, cfg.span);
  return {r.loss, std::move(r.phi_grad)};
}

RecurrentOptimizer train_meta(RecurrentOptimizer opt, const TaskSampler& sampler, const UnrollConfig& cfg,
                              const KappaFn& kappa, std::size_t outer_steps, Rng& rng, MetaTrainLog* log) {
  require(outer_steps >= 1, ErrorCode::InvalidArgument, "train_meta: outer_steps must be >= 1");
  cfg.validate();
  const std::size_t count = opt.parameter_count();
  AdaptiveState meta_state = AdaptiveState::make(cfg.meta_rule, count);

  std::vector<std::unique_ptr<InnerProblem>> problems(cfg.batch);
  std::vector<std::unique_ptr<UnrollSession>> sessions(cfg.batch);
  auto restart = [&](std::size_t b) {
    sessions[b].reset();
    problems[b] = sampler(rng);
    require(problems[b] != nullptr, ErrorCode::InvalidArgument, "train_meta: sampler returned no task");
    Vector theta0 = rng.normal_vector(problems[b]->dim(), cfg.theta_init_std);
    sessions[b] = std::make_unique<UnrollSession>(*problems[b], std::move(theta0), opt.config());
  };

  std::size_t consecutive_failures = 0;
  std::size_t done = 0;
  while (done < outer_steps) {
    try {
      Vector grad(count);
      double loss = 0.0;
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        if (!sessions[b] || sessions[b]->steps_done() >= cfg.span) restart(b);
        const std::size_t len = std::min(cfg.segment, cfg.span - sessions[b]->steps_done());
        const SegmentResult r = sessions[b]->run_segment(opt, cfg, kappa, len);
        grad += r.phi_grad;
        loss += r.loss;
      }
      grad *= 1.0 / static_cast<double>(cfg.batch);
      require(grad.all_finite() && std::isfinite(loss), ErrorCode::NonFiniteLoss,
              "train_meta: non-finite meta-gradient");
      opt.set_flat(baseline_step(meta_state, opt.flat(), grad, cfg.meta_lr));
      if (log) log->losses.push_back(loss / static_cast<double>(cfg.batch));
      consecutive_failures = 0;
      ++done;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteLoss && e.code() != ErrorCode::NonFiniteInput) throw;
      if (log) ++log->failures;
      if (++consecutive_failures >= 3) {
        fail(ErrorCode::NonFiniteLoss,
             std::string("train_meta: three consecutive non-finite unrolls; reduce beta or meta_lr (") + e.what() +
                 ")");
      }
      for (std::size_t b = 0; b < cfg.batch; ++b) sessions[b].reset();
    }
  }
  return opt;
}

}  // namespace safeopt
