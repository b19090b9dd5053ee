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

#include <cstddef>
#include <optional>
#include <vector>

#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/projection.hpp"

namespace safeopt {

/// Constraint values C_i(theta) (feasible when <= 0) and their gradients,
/// one row per constraint.
struct ConstraintEval {
  Vector values;
  Matrix gradients;

  std::size_t count() const noexcept { return values.size(); }
};

/// Linear extended class-kappa function alpha(c) = slope * c.
struct KappaFn {
  double slope = 20.0;

  double operator()(double c) const noexcept { return slope * c; }
};

/// Constraint set on the update direction: gradients * dir <= -alpha(values).
/// Throws RankDeficient when the gradient rows are dependent and
/// InvalidArgument for a non-positive slope.
Polytope build_update_polytope(const ConstraintEval& cons, const KappaFn& kappa);

/// Result of pruning constraint rows before polytope construction.
struct RowSelection {
  ConstraintEval kept;
  std::vector<std::size_t> kept_rows;
  std::vector<std::size_t> dropped_rows;
};

/// Removes rows that would make the gradient matrix rank deficient.
///
/// Zero gradient rows are dropped (they carry no direction). Of two rows with
/// cosine similarity above 1 - 1e-10 the one with the larger constraint value
/// is kept. If the survivors are still dependent, the least violated rows are
/// dropped one at a time until the rank check passes.
RowSelection select_independent_rows(const ConstraintEval& cons);

struct SafeUpdate {
  Vector theta_next;
  Vector dir;
};

/// theta_next = theta + beta * project(raw_dir). The returned direction
/// satisfies poly.A dir <= poly.b.
SafeUpdate safe_update(const Vector& theta, const Vector& raw_dir, const Polytope& poly,
                       const ProjectionMetric& metric, double beta);

/// Polytope and metric for one update, built from pruned constraint rows.
struct UpdateConstraints {
  Polytope poly;
  ProjectionMetric metric;
  std::vector<std::size_t> kept_rows;
};

UpdateConstraints prepare_update_constraints(const ConstraintEval& cons, const KappaFn& kappa,
                                             double delta);

}  // namespace safeopt
