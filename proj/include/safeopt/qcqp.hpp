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

#include <iosfwd>
#include <string>
#include <vector>

#include "safeopt/baselines.hpp"
#include "safeopt/meta_opt.hpp"
#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/ndcore/rng.hpp"

namespace safeopt {

/// min ||W x - y||^2  s.t.  (x - x0)^T M (x - x0) - r <= 0, started at x_init.
struct QcqpInstance {
  Matrix W;
  Vector y;
  Matrix M;
  Vector x0;
  double r = 1.0;
  Vector x_init;

  std::size_t dim() const noexcept { return y.size(); }
  /// Throws DimensionMismatch or InvalidArgument (asymmetric W or M, r <= 0).
  void validate() const;
};

struct QcqpEval {
  double J = 0.0;
  Vector gradJ;
  double C = 0.0;
  Vector gradC;
};

QcqpEval qcqp_eval(const QcqpInstance& inst, const Vector& x);

struct QcqpGeneratorConfig {
  std::size_t n = 8;
  double w_eig_lo = 0.5;
  double w_eig_hi = 2.0;
  double m_eig_lo = -1.0;
  double m_eig_hi = 2.0;
  double r = 1.0;
  double init_distance = 3.0;
};

/// Symmetric matrix U diag(lambda) U^T with U Haar-orthogonal and lambda
/// uniform on [lo, hi].
Matrix random_symmetric(std::size_t n, double lo, double hi, Rng& rng);

/// W and M from random_symmetric, x0 and y standard normal, x_init at
/// init_distance from x0 in a uniform direction.
QcqpInstance sample_qcqp(const QcqpGeneratorConfig& cfg, Rng& rng);

/// sample_qcqp with the start direction redrawn until C(x_init) > 0, and
/// the instance redrawn when 100 directions fail. Throws InvalidArgument
/// when no infeasible start is found (e.g. m_eig entirely negative).
QcqpInstance sample_infeasible_start(const QcqpGeneratorConfig& cfg, Rng& rng);

/// Replaces y so the unconstrained minimizer W^-1 y sits at x0 + u with
/// |u^T M u| <= r / 4, strictly inside the feasible set.
void place_feasible_minimizer(QcqpInstance& inst, Rng& rng);

/// Inner problem view for meta-training: maximizes -J under C <= 0.
class QcqpProblem final : public InnerProblem {
 public:
  explicit QcqpProblem(QcqpInstance inst);
  std::size_t dim() const override { return inst_.dim(); }
  InnerEval evaluate(const Vector& theta) override;
  const QcqpInstance& instance() const noexcept { return inst_; }

 private:
  QcqpInstance inst_;
};

enum class QcqpSolver { Fisar, Plain, Adam, RmsProp, Projected };

std::string_view solver_name(QcqpSolver s) noexcept;
QcqpSolver parse_solver(std::string_view name);

struct QcqpBenchmarkSettings {
  /// Step size of the constrained solvers (fisar, projected).
  double beta = 0.01;
  double slope = 20.0;
  double delta = 1.0;
  double lr_plain = 0.01;
  double lr_adam = 0.01;
  double lr_rmsprop = 0.01;
};

struct QcqpCurvePoint {
  std::size_t step = 0;
  QcqpSolver solver = QcqpSolver::Fisar;
  double objective = 0.0;
  /// max(C, 0)
  double violation = 0.0;
  /// Raw constraint value C.
  double constraint = 0.0;
  /// gradC . dir + slope * C for the step leaving this point; 0 for
  /// unconstrained solvers and the final point.
  double lyapunov_slack = 0.0;
};

/// Runs each solver from inst.x_init for `steps` updates and logs every
/// point including the start, so a zero-step run returns only the initial
/// values. `opt` is required when the list contains Fisar. Throws
/// NonFiniteLoss on divergence.
std::vector<QcqpCurvePoint> run_qcqp_benchmark(const QcqpInstance& inst, const std::vector<QcqpSolver>& solvers,
                                               std::size_t steps, const QcqpBenchmarkSettings& settings,
                                               const RecurrentOptimizer* opt);

/// CSV with header step,solver,objective,violation.
void write_qcqp_csv(std::ostream& out, const std::vector<QcqpCurvePoint>& curve);

}  // namespace safeopt
