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

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "safeopt/baselines.hpp"
#include "safeopt/constraint_dynamics.hpp"
#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/ndcore/rng.hpp"
#include "safeopt/ndcore/tape.hpp"

namespace safeopt {

struct RecurrentOptimizerConfig {
  std::size_t hidden = 128;
  std::size_t layers = 2;
  /// Multiplies the cell-stack output before projection.
  double output_scale = 0.1;
  /// Clamp parameter of the log-magnitude / sign gradient encoding.
  double preprocess_p = 10.0;
};

/// Gate order inside LstmLayer arrays.
enum Gate : std::size_t { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

struct LstmLayer {
  std::array<Matrix, 4> wx;  // in x hidden
  std::array<Matrix, 4> wh;  // hidden x hidden
  std::array<Matrix, 4> b;   // 1 x hidden
};

/// Stacked LSTM applied independently to every coordinate of the parameter
/// vector, with one set of weights shared by all coordinates.
///
/// Each coordinate's 2-wide encoded gradient runs through the stack and a
/// linear head gives one raw direction entry.
class RecurrentOptimizer {
 public:
  /// All parameters zero.
  explicit RecurrentOptimizer(RecurrentOptimizerConfig cfg = {});
  /// Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero head bias.
  static RecurrentOptimizer random(RecurrentOptimizerConfig cfg, Rng& rng);

  const RecurrentOptimizerConfig& config() const noexcept { return cfg_; }
  std::size_t parameter_count() const noexcept;

  /// Parameters flattened in a fixed order: per layer (wx, wh, b for each
  /// gate), then the head weight and bias.
  Vector flat() const;
  void set_flat(const Vector& values);

  std::vector<LstmLayer>& layers() noexcept { return layers_; }
  const std::vector<LstmLayer>& layers() const noexcept { return layers_; }
  Matrix& head_w() noexcept { return head_w_; }
  const Matrix& head_w() const noexcept { return head_w_; }
  Matrix& head_b() noexcept { return head_b_; }
  const Matrix& head_b() const noexcept { return head_b_; }

  bool all_finite() const noexcept;

  /// Text checkpoint. Values use 17 significant digits, so load(save(x))
  /// reproduces every parameter exactly.
  void save(std::ostream& out) const;
  static RecurrentOptimizer load(std::istream& in);
  void save_file(const std::string& path) const;
  static RecurrentOptimizer load_file(const std::string& path);

 private:
  template <typename F>
  void for_each_block(F&& f);
  template <typename F>
  void for_each_block(F&& f) const;

  RecurrentOptimizerConfig cfg_;
  std::vector<LstmLayer> layers_;
  Matrix head_w_;  // hidden x 1
  Matrix head_b_;  // 1 x 1
};

/// Per-coordinate recurrent state: one n x hidden block per layer.
struct CoordOptimizerState {
  std::vector<Matrix> h;
  std::vector<Matrix> c;

  static CoordOptimizerState zeros(std::size_t n, const RecurrentOptimizerConfig& cfg);
  std::size_t coordinates() const noexcept { return h.empty() ? 0 : h.front().rows(); }
  bool all_finite() const noexcept;
};

/// Two-channel encoding: (log|g|/p, sign g) when |g| >= e^-p, else (-1, e^p g).
Matrix preprocess_gradient(const Vector& grad, double p);

struct OptimizerStepResult {
  Vector raw_dir;
  CoordOptimizerState state;
};

/// One recurrent step. Throws NonFiniteInput for a non-finite gradient and
/// DimensionMismatch when the state was built for another size.
OptimizerStepResult optimizer_step(const RecurrentOptimizer& opt, const Vector& grad,
                                   const CoordOptimizerState& state);

/// Objective to maximize and the constraints at one parameter point.
struct InnerEval {
  double objective = 0.0;
  Vector objective_grad;
  ConstraintEval constraints;
};

/// A task the meta-optimizer updates. Stochastic problems draw their own
/// randomness; evaluate() is called once per point in unroll order.
class InnerProblem {
 public:
  virtual ~InnerProblem() = default;
  virtual std::size_t dim() const = 0;
  virtual InnerEval evaluate(const Vector& theta) = 0;
};

struct UnrollConfig {
  std::size_t span = 120;
  /// Truncation length for backpropagation; span is split into segments.
  std::size_t segment = 20;
  /// Loss weights w_1..w_span; empty means all ones.
  std::vector<double> weights;
  double beta = 0.001;
  double meta_lr = 0.05;
  std::size_t batch = 24;
  BaselineRule meta_rule = BaselineRule::Adam;
  double theta_init_std = 0.1;
  double delta = 1.0;

  double weight(std::size_t k) const;
  void validate() const;
};

/// What one inner step saw and did; enough to replay the unroll.
struct StepRecord {
  Vector theta;
  Vector grad;
  Polytope poly;
  Vector raw_dir;
  Vector dir;
};

struct SegmentResult {
  /// -sum_k w_k J(theta_k) over the post-update points of this segment.
  double loss = 0.0;
  Vector phi_grad;
  std::vector<StepRecord> records;
  /// Objective at the post-update points.
  std::vector<double> objectives;
  /// max_i (A dir - b)_i over all steps; <= 0 up to rounding.
  double max_polytope_residual = 0.0;
};

/// A single unroll that can be advanced segment by segment with the
/// recurrent state carried across segments and the gradient truncated at
/// segment boundaries.
///
/// Backward rule: gradients of the inner problem and the polytope are held
/// constant with respect to phi. The adjoint of theta_k is
/// -w_k grad J(theta_k) plus the adjoint of theta_{k+1}; it reaches the
/// optimizer output through project_vjp and then the cell stack in one
/// reverse pass per segment.
class UnrollSession {
 public:
  UnrollSession(InnerProblem& problem, Vector theta0, const RecurrentOptimizerConfig& cfg);

  /// Runs `steps` inner updates. Throws NonFiniteLoss on a non-finite
  /// objective and NonFiniteInput on a non-finite gradient.
  SegmentResult run_segment(const RecurrentOptimizer& opt, const UnrollConfig& cfg,
                            const KappaFn& kappa, std::size_t steps, bool with_gradient = true);

  const Vector& theta() const noexcept { return theta_; }
  std::size_t steps_done() const noexcept { return steps_done_; }
  const CoordOptimizerState& state() const noexcept { return state_; }

 private:
  const InnerEval& current();

  InnerProblem& problem_;
  Vector theta_;
  CoordOptimizerState state_;
  std::unique_ptr<InnerEval> cached_;
  std::size_t steps_done_ = 0;
};

struct UnrollResult {
  double loss = 0.0;
  Vector phi_grad;
};

/// Full unroll of cfg.span steps without truncation.
UnrollResult unroll_loss(const RecurrentOptimizer& opt, InnerProblem& problem, const Vector& theta0,
                         const UnrollConfig& cfg, const KappaFn& kappa);

/// Fresh inner problem for meta-training.
using TaskSampler = std::function<std::unique_ptr<InnerProblem>(Rng&)>;

struct MetaTrainLog {
  std::vector<double> losses;
  std::size_t failures = 0;
};

/// Meta-trains phi for `outer_steps` updates. Each update averages
/// phi_grad over cfg.batch unrolls advanced by one segment; unrolls restart
/// from a new task and theta ~ N(0, theta_init_std^2) after cfg.span steps.
/// A non-finite loss discards the batch; three in a row rethrow.
RecurrentOptimizer train_meta(RecurrentOptimizer opt, const TaskSampler& sampler, const UnrollConfig& cfg,
                              const KappaFn& kappa, std::size_t outer_steps, Rng& rng,
                              MetaTrainLog* log = nullptr);

/// Records the recurrent-cell forward on a tape. Used by optimizer_step and
/// by the training pass so both evaluate identical arithmetic.
struct CellVars {
  std::vector<Var> wx;  // layer-major, 4 per layer
  std::vector<Var> wh;
  std::vector<Var> b;
  Var head_w;
  Var head_b;
  Var ones;  // n x 1

  std::vector<Var> all() const;
};

CellVars record_cell_parameters(Tape& tape, const RecurrentOptimizer& opt, std::size_t n, bool trainable);

/// Returns the scaled raw output (n x 1) and updates h, c in place.
Var record_cell_step(Tape& tape, const CellVars& vars, const RecurrentOptimizerConfig& cfg, Var input,
                     std::vector<Var>& h, std::vector<Var>& c);

}  // namespace safeopt
