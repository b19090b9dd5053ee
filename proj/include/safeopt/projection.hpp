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

#include "safeopt/ndcore/matrix.hpp"

namespace safeopt {

/// {x : A x <= b}, A is m x n with m <= n and full row rank.
struct Polytope {
  Matrix A;
  Vector b;

  std::size_t constraints() const noexcept { return A.rows(); }
  std::size_t dim() const noexcept { return A.cols(); }
};

/// Relative floor on sigma_min(A) / sigma_max(A) below which the Gram
/// factorization is rejected.
inline constexpr double kRankTolerance = 1e-8;

/// Metric Q for projecting onto a polytope, kept in factored form.
///
/// Q^{-1} = delta I + A^T G^{-1} (I - delta G) G^{-1} A with G = A A^T. This
/// choice makes A Q^{-1} A^T = I, so the dual of the projection QP decouples
/// and the multipliers are max(0, A x0 - b) componentwise. Q^{-1} acts as
/// delta on the null space of A and as G^{-1} on the row space; its spectrum
/// is delta (n - m times) together with 1 / sigma_i^2.
///
/// Only the Cholesky factor of G is stored. Applying Q^{-1} costs O(mn + m^2).
/// Immutable once built.
class ProjectionMetric {
 public:
  /// Throws RankDeficient when A is numerically rank deficient,
  /// InvalidArgument when delta <= 0 or m > n.
  ProjectionMetric(Matrix A, double delta = 1.0);

  double delta() const noexcept { return delta_; }
  const Matrix& A() const noexcept { return A_; }
  const Cholesky& gram() const noexcept { return gram_; }
  std::size_t constraints() const noexcept { return A_.rows(); }
  std::size_t dim() const noexcept { return A_.cols(); }

  /// Q^{-1} v
  Vector apply_inverse(const Vector& v) const;
  /// Q^{-1} A^T lambda, which reduces to A^T G^{-1} lambda.
  Vector apply_inverse_At(const Vector& lambda) const;
  /// Dense Q^{-1}, for inspection and tests only.
  Matrix assemble_inverse() const;

 private:
  Matrix A_;
  double delta_;
  Cholesky gram_;
};

ProjectionMetric build_metric(const Matrix& A, double delta = 1.0);

struct ProjectionResult {
  Vector x;
  Vector lambda;
};

/// Closed-form minimizer of 0.5 (x - x0)^T Q (x - x0) subject to A x <= b:
/// lambda = max(0, A x0 - b), x = x0 - Q^{-1} A^T lambda. Then A x equals
/// min(A x0, b) componentwise, and interior points are returned unchanged.
ProjectionResult project(const ProjectionMetric& metric, const Vector& x0, const Vector& b);

/// Directional derivative of project(., b) at x0 along v:
/// (I - Q^{-1} A^T D A) v with D_ii = 1 iff (A x0 - b)_i > 0. A residual of
/// exactly zero counts as inactive.
Vector project_jvp(const ProjectionMetric& metric, const Vector& x0, const Vector& b,
                   const Vector& v);

/// Transposed Jacobian applied to u: (I - A^T D A Q^{-1}) u. Used by the
/// reverse pass of the meta-optimizer unroll.
Vector project_vjp(const ProjectionMetric& metric, const Vector& x0, const Vector& b,
                   const Vector& u);

}  // namespace safeopt
