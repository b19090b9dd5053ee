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

#include "safeopt/constraint_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "safeopt/error.hpp"

namespace safeopt {

namespace {

constexpr double kDuplicateCosine = 1.0 - 1e-10;

void check_eval(const ConstraintEval& cons) {
  require(cons.gradients.rows() == cons.values.size(), ErrorCode::DimensionMismatch,
          "constraints: " + std::to_string(cons.values.size()) + " values but " +
              std::to_string(cons.gradients.rows()) + " gradient rows");
  require(cons.values.all_finite() && cons.gradients.all_finite(), ErrorCode::NonFiniteInput,
          "constraints: non-finite value or gradient");
}

ConstraintEval subset(const ConstraintEval& cons, const std::vector<std::size_t>& rows) {
  const std::size_t n = cons.gradients.cols();
  ConstraintEval out{Vector(rows.size()), Matrix(rows.size(), n)};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.values[k] = cons.values[rows[k]];
    const auto src = cons.gradients.row_span(rows[k]);
    std::copy(src.begin(), src.end(), out.gradients.row_span(k).begin());
  }
  return out;
}

bool full_row_rank(const Matrix& a) {
  try {
    ProjectionMetric probe(a, 1.0);
    return true;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::RankDeficient) return false;
    throw;
  }
}

}  // namespace

Polytope build_update_polytope(const ConstraintEval& cons, const KappaFn& kappa) {
  check_eval(cons);
  require(kappa.slope > 0.0 && std::isfinite(kappa.slope), ErrorCode::InvalidArgument,
          "kappa: slope must be positive");
  if (!full_row_rank(cons.gradients)) {
    fail(ErrorCode::RankDeficient,
         "build_update_polytope: constraint gradients are linearly dependent; drop or perturb rows");
  }
  Polytope poly{cons.gradients, Vector(cons.count())};
  for (std::size_t i = 0; i < cons.count(); ++i) poly.b[i] = -kappa(cons.values[i]);
  return poly;
}

RowSelection select_independent_rows(const ConstraintEval& cons) {
  check_eval(cons);
  const std::size_t m = cons.count();
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (double g : cons.gradients.row_span(i)) acc += g * g;
    norms[i] = std::sqrt(acc);
  }
  double scale = 0.0;
  for (double v : norms) scale = std::max(scale, v);

  // Most violated first, so duplicates keep the binding row.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cons.values[a] > cons.values[b]; });

  RowSelection sel;
  for (std::size_t i : order) {
    if (!(norms[i] > kRankTolerance * scale) || norms[i] == 0.0) {
      sel.dropped_rows.push_back(i);
      continue;
    }
    bool duplicate = false;
    for (std::size_t j : sel.kept_rows) {
      double acc = 0.0;
      const auto gi = cons.gradients.row_span(i);
      const auto gj = cons.gradients.row_span(j);
      for (std::size_t c = 0; c < gi.size(); ++c) acc += gi[c] * gj[c];
      if (acc / (norms[i] * norms[j]) > kDuplicateCosine) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      sel.dropped_rows.push_back(i);
    } else {
      sel.kept_rows.push_back(i);
    }
  }

  while (sel.kept_rows.size() > cons.gradients.cols() ||
         !full_row_rank(subset(cons, sel.kept_rows).gradients)) {
    sel.dropped_rows.push_back(sel.kept_rows.back());
    sel.kept_rows.pop_back();
  }
  // Preserve the caller's row order in the output.
  std::sort(sel.kept_rows.begin(), sel.kept_rows.end());
  std::sort(sel.dropped_rows.begin(), sel.dropped_rows.end());
  sel.kept = subset(cons, sel.kept_rows);
  return sel;
}

SafeUpdate safe_update(const Vector& theta, const Vector& raw_dir, const Polytope& poly,
                       const ProjectionMetric& metric, double beta) {
  require(beta > 0.0 && std::isfinite(beta), ErrorCode::InvalidArgument,
          "safe_update: beta must be positive");
  require(theta.size() == raw_dir.size(), ErrorCode::DimensionMismatch,
          "safe_update: theta and direction sizes differ");
  require(metric.A() == poly.A, ErrorCode::InvalidArgument,
          "safe_update: metric was built from a different constraint matrix");
  SafeUpdate out{theta, project(metric, raw_dir, poly.b).x};
  axpy(beta, out.dir, out.theta_next);
  return out;
}

UpdateConstraints prepare_update_constraints(const ConstraintEval& cons, const KappaFn& kappa,
                                             double delta) {
  RowSelection sel = select_independent_rows(cons);
  Polytope poly = build_update_polytope(sel.kept, kappa);
  ProjectionMetric metric(poly.A, delta);
  return {std::move(poly), std::move(metric), std::move(sel.kept_rows)};
}

}  // namespace safeopt
