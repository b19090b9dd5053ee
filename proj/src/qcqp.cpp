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

#include "safeopt/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "safeopt/constraint_dynamics.hpp"
#include "safeopt/error.hpp"
#include "safeopt/io.hpp"

namespace safeopt {

void QcqpInstance::validate() const {
  const std::size_t n = y.size();
  require(W.rows() == n && W.cols() == n && M.rows() == n && M.cols() == n && x0.size() == n &&
              x_init.size() == n,
          ErrorCode::DimensionMismatch, "qcqp: instance dimensions disagree");
  require(asymmetry(W) <= 1e-12 * std::max(1.0, max_abs(W)), ErrorCode::InvalidArgument, "qcqp: W is not symmetric");
  require(asymmetry(M) <= 1e-12 * std::max(1.0, max_abs(M)), ErrorCode::InvalidArgument, "qcqp: M is not symmetric");
  require(r > 0.0, ErrorCode::InvalidArgument, "qcqp: r must be positive");
}

QcqpEval qcqp_eval(const QcqpInstance& inst, const Vector& x) {
  require(x.size() == inst.dim(), ErrorCode::DimensionMismatch, "qcqp_eval: point has the wrong dimension");
  const Vector residual = matvec(inst.W, x) - inst.y;
  const Vector offset = x - inst.x0;
  const Vector m_offset = matvec(inst.M, offset);
  QcqpEval e;
  e.J = dot(residual, residual);
  e.gradJ = 2.0 * matvec_t(inst.W, residual);
  e.C = dot(offset, m_offset) - inst.r;
  e.gradC = 2.0 * m_offset;
  return e;
}

Matrix random_symmetric(std::size_t n, double lo, double hi, Rng& rng) {
  // Modified Gram-Schmidt on a Gaussian matrix; rows become the basis.
  Matrix u(n, n);
  for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = u.row_span(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto rj = u.row_span(j);
      double proj = 0.0;
      for (std::size_t k = 0; k < n; ++k) proj += ri[k] * rj[k];
      for (std::size_t k = 0; k < n; ++k) ri[k] -= proj * rj[k];
    }
    double norm = 0.0;
    for (double v : ri) norm += v * v;
    norm = std::sqrt(norm);
    require(norm > 1e-12, ErrorCode::RankDeficient, "random_symmetric: degenerate draw");
    for (double& v : ri) v /= norm;
  }
  Matrix scaled = u.transpose();  // columns are the basis vectors
  for (std::size_t j = 0; j < n; ++j) {
    const double lambda = rng.uniform(lo, hi);
    for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= lambda;
  }
  Matrix s = matmul(scaled, u);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s(j, i) = s(i, j);
  return s;
}

QcqpInstance sample_qcqp(const QcqpGeneratorConfig& cfg, Rng& rng) {
  require(cfg.n >= 1, ErrorCode::InvalidArgument, "sample_qcqp: n must be >= 1");
  require(cfg.w_eig_lo <= cfg.w_eig_hi && cfg.m_eig_lo <= cfg.m_eig_hi, ErrorCode::InvalidArgument,
          "sample_qcqp: eigenvalue range is empty");
  QcqpInstance inst;
  inst.W = random_symmetric(cfg.n, cfg.w_eig_lo, cfg.w_eig_hi, rng);
  inst.M = random_symmetric(cfg.n, cfg.m_eig_lo, cfg.m_eig_hi, rng);
  inst.y = rng.normal_vector(cfg.n);
  inst.x0 = rng.normal_vector(cfg.n);
  inst.r = cfg.r;
  inst.x_init = inst.x0;
  axpy(cfg.init_distance, rng.unit_vector(cfg.n), inst.x_init);
  return inst;
}

QcqpInstance sample_infeasible_start(const QcqpGeneratorConfig& cfg, Rng& rng) {
  // A negative definite M admits no infeasible start, so the whole instance
  // is redrawn after a run of failed directions.
  for (int draw = 0; draw < 100; ++draw) {
    QcqpInstance inst = sample_qcqp(cfg, rng);
    for (int attempt = 0; attempt < 100; ++attempt) {
      if (qcqp_eval(inst, inst.x_init).C > 0.0) return inst;
      inst.x_init = inst.x0;
      axpy(cfg.init_distance, rng.unit_vector(cfg.n), inst.x_init);
    }
  }
  fail(ErrorCode::InvalidArgument, "sample_infeasible_start: no infeasible start found; check m_eig and init_distance");
}

void place_feasible_minimizer(QcqpInstance& inst, Rng& rng) {
  inst.validate();
  // |u^T M u| <= ||M||_F ||u||^2, so ||u||^2 <= r / (4 ||M||_F) suffices.
  double frob = 0.0;
  for (double v : inst.M.values()) frob += v * v;
  frob = std::sqrt(frob);
  const double radius = frob > 0.0 ? std::sqrt(inst.r / (4.0 * frob)) : 1.0;
  Vector x_star = inst.x0;
  axpy(radius * rng.uniform(), rng.unit_vector(inst.dim()), x_star);
  inst.y = matvec(inst.W, x_star);
}

QcqpProblem::QcqpProblem(QcqpInstance inst) : inst_(std::move(inst)) { inst_.validate(); }

InnerEval QcqpProblem::evaluate(const Vector& theta) {
  QcqpEval e = qcqp_eval(inst_, theta);
  InnerEval out;
  out.objective = -e.J;
  out.objective_grad = -1.0 * e.gradJ;
  out.constraints.values = Vector{e.C};
  out.constraints.gradients = Matrix::row(e.gradC);
  return out;
}

std::string_view solver_name(QcqpSolver s) noexcept {
  switch (s) {
    case QcqpSolver::Fisar: return "fisar";
    case QcqpSolver::Plain: return "plain";
    case QcqpSolver::Adam: return "adam";
    case QcqpSolver::RmsProp: return "rmsprop";
    case QcqpSolver::Projected: return "projected";
  }
  return "unknown";
}

QcqpSolver parse_solver(std::string_view name) {
  for (QcqpSolver s : {QcqpSolver::Fisar, QcqpSolver::Plain, QcqpSolver::Adam, QcqpSolver::RmsProp,
                       QcqpSolver::Projected}) {
    if (solver_name(s) == name) return s;
  }
  fail(ErrorCode::InvalidArgument, "unknown qcqp solver '" + std::string(name) + "'");
}

namespace {

QcqpCurvePoint point(std::size_t step, QcqpSolver solver, const QcqpEval& e) {
  require(std::isfinite(e.J) && std::isfinite(e.C) && e.gradJ.all_finite() && e.gradC.all_finite(),
          ErrorCode::NonFiniteLoss,
          "qcqp: " + std::string(solver_name(solver)) + " diverged at step " + std::to_string(step));
  return {step, solver, e.J, std::max(e.C, 0.0), e.C, 0.0};
}

void run_one(const QcqpInstance& inst, QcqpSolver solver, std::size_t steps, const QcqpBenchmarkSettings& s,
             const RecurrentOptimizer* opt, std::vector<QcqpCurvePoint>& out) {
  const std::size_t n = inst.dim();
  const KappaFn kappa{s.slope};
  Vector x = inst.x_init;
  QcqpEval e = qcqp_eval(inst, x);
  out.push_back(point(0, solver, e));

  AdaptiveState adaptive;
  double lr = 0.0;
  switch (solver) {
    case QcqpSolver::Plain: adaptive = AdaptiveState::make(BaselineRule::Plain, n); lr = s.lr_plain; break;
    case QcqpSolver::Adam: adaptive = AdaptiveState::make(BaselineRule::Adam, n); lr = s.lr_adam; break;
    case QcqpSolver::RmsProp: adaptive = AdaptiveState::make(BaselineRule::RmsProp, n); lr = s.lr_rmsprop; break;
    default: break;
  }
  CoordOptimizerState state;
  if (solver == QcqpSolver::Fisar) {
    require(opt != nullptr, ErrorCode::InvalidArgument, "qcqp: the fisar solver needs a trained optimizer");
    state = CoordOptimizerState::zeros(n, opt->config());
  }

  for (std::size_t k = 1; k <= steps; ++k) {
    if (solver == QcqpSolver::Fisar || solver == QcqpSolver::Projected) {
      const ConstraintEval cons{Vector{e.C}, Matrix::row(e.gradC)};
      const UpdateConstraints uc = prepare_update_constraints(cons, kappa, s.delta);
      Vector raw;
      if (solver == QcqpSolver::Fisar) {
        OptimizerStepResult r = optimizer_step(*opt, -1.0 * e.gradJ, state);
        raw = std::move(r.raw_dir);
        state = std::move(r.state);
        require(raw.all_finite(), ErrorCode::NonFiniteLoss, "qcqp: optimizer output is not finite");
      } else {
        raw = -1.0 * e.gradJ;
      }
      const SafeUpdate up = safe_update(x, raw, uc.poly, uc.metric, s.beta);
      out.back().lyapunov_slack = dot(e.gradC, up.dir) + kappa(e.C);
      x = up.theta_next;
    } else {
      x = baseline_step(adaptive, x, e.gradJ, lr);
    }
    e = qcqp_eval(inst, x);
    out.push_back(point(k, solver, e));
  }
}

}  // namespace

std::vector<QcqpCurvePoint> run_qcqp_benchmark(const QcqpInstance& inst, const std::vector<QcqpSolver>& solvers,
                                               std::size_t steps, const QcqpBenchmarkSettings& settings,
                                               const RecurrentOptimizer* opt) {
  inst.validate();
  require(settings.beta > 0.0 && settings.slope > 0.0 && settings.delta > 0.0, ErrorCode::InvalidArgument,
          "qcqp: beta, slope and delta must be positive");
  std::vector<QcqpCurvePoint> out;
  out.reserve(solvers.size() * (steps + 1));
  for (QcqpSolver solver : solvers) run_one(inst, solver, steps, settings, opt, out);
  return out;
}

void write_qcqp_csv(std::ostream& out, const std::vector<QcqpCurvePoint>& curve) {
  out << "step,solver,objective,violation\n";
  for (const QcqpCurvePoint& p : curve) {
    out << p.step << ',' << solver_name(p.solver) << ',' << format_real(p.objective) << ','
        << format_real(p.violation) << '\n';
  }
}

}  // namespace safeopt
