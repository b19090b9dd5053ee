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

#include "safeopt/projection.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "safeopt/error.hpp"

namespace safeopt {

namespace {

Cholesky factor_gram(const Matrix& A) {
  require(A.rows() <= A.cols(), ErrorCode::InvalidArgument,
          "build_metric: " + std::to_string(A.rows()) + " constraints exceed dimension " +
              std::to_string(A.cols()));
  require(A.all_finite(), ErrorCode::NonFiniteInput, "build_metric: non-finite constraint matrix");
  const std::size_t m = A.rows();
  Matrix gram = matmul_nt(A, A);
  // Symmetrize exactly; the product is symmetric only up to rounding.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) gram(j, i) = gram(i, j);

  if (m > 0) {
    Eigen::MatrixXd g(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gram(i, j);
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g, Eigen::EigenvaluesOnly).eigenvalues();
    const double largest = eig.maxCoeff();
    const double smallest = eig.minCoeff();
    if (!(largest > 0.0) || !(smallest > kRankTolerance * kRankTolerance * largest)) {
      fail(ErrorCode::RankDeficient,
           "build_metric: constraint rows are numerically dependent (sigma ratio " +
               std::to_string(std::sqrt(std::max(smallest, 0.0) / std::max(largest, 1e-300))) + ")");
    }
  }
  try {
    return Cholesky(gram);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotPositiveDefinite) fail(ErrorCode::RankDeficient, e.what());
    throw;
  }
}

void check_dims(const ProjectionMetric& metric, const Vector& x0, const Vector& b) {
  require(x0.size() == metric.dim(), ErrorCode::DimensionMismatch,
          "project: point has " + std::to_string(x0.size()) + " entries, metric expects " +
              std::to_string(metric.dim()));
  require(b.size() == metric.constraints(), ErrorCode::DimensionMismatch,
          "project: bound has " + std::to_string(b.size()) + " entries, metric expects " +
              std::to_string(metric.constraints()));
}

// D (A x0 - b) as a 0/1 mask, with zero residual treated as inactive.
Vector active_mask(const ProjectionMetric& metric, const Vector& x0, const Vector& b) {
  Vector mask = matvec(metric.A(), x0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (mask[i] - b[i]) > 0.0 ? 1.0 : 0.0;
  return mask;
}

}  // namespace

ProjectionMetric::ProjectionMetric(Matrix A, double delta)
    : A_(std::move(A)), delta_(delta), gram_(factor_gram(A_)) {
  require(delta > 0.0 && std::isfinite(delta), ErrorCode::InvalidArgument,
          "build_metric: delta must be positive");
}

Vector ProjectionMetric::apply_inverse(const Vector& v) const {
  require(v.size() == dim(), ErrorCode::DimensionMismatch, "apply_inverse: size mismatch");
  // u = A v; Q^{-1} v = delta v + A^T G^{-1} (G^{-1} u - delta u)
  const Vector u = matvec(A_, v);
  Vector inner = gram_.solve(u);
  axpy(-delta_, u, inner);
  Vector out = delta_ * v;
  out += matvec_t(A_, gram_.solve(inner));
  return out;
}

Vector ProjectionMetric::apply_inverse_At(const Vector& lambda) const {
  require(lambda.size() == constraints(), ErrorCode::DimensionMismatch,
          "apply_inverse_At: size mismatch");
  return matvec_t(A_, gram_.solve(lambda));
}

Matrix ProjectionMetric::assemble_inverse() const {
  const std::size_t n = dim();
  Matrix out(n, n);
  Vector e(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Vector col = apply_inverse(e);
    for (std::size_t i = 0; i < n; ++i) out(i, j) = col[i];
    e[j] = 0.0;
  }
  return out;
}

ProjectionMetric build_metric(const Matrix& A, double delta) { return ProjectionMetric(A, delta); }

ProjectionResult project(const ProjectionMetric& metric, const Vector& x0, const Vector& b) {
  check_dims(metric, x0, b);
  Vector lambda = matvec(metric.A(), x0);
  bool any_active = false;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    lambda[i] = std::max(0.0, lambda[i] - b[i]);
    any_active = any_active || lambda[i] > 0.0;
  }
  if (!any_active) return {x0, lambda};
  Vector x = x0;
  x -= metric.apply_inverse_At(lambda);
  return {std::move(x), std::move(lambda)};
}

Vector project_jvp(const ProjectionMetric& metric, const Vector& x0, const Vector& b,
                   const Vector& v) {
  check_dims(metric, x0, b);
  require(v.size() == metric.dim(), ErrorCode::DimensionMismatch, "project_jvp: direction size");
  const Vector mask = active_mask(metric, x0, b);
  Vector dav = matvec(metric.A(), v);
  for (std::size_t i = 0; i < dav.size(); ++i) dav[i] *= mask[i];
  Vector out = v;
  out -= metric.apply_inverse_At(dav);
  return out;
}

Vector project_vjp(const ProjectionMetric& metric, const Vector& x0, const Vector& b,
                   const Vector& u) {
  check_dims(metric, x0, b);
  require(u.size() == metric.dim(), ErrorCode::DimensionMismatch, "project_vjp: cotangent size");
  const Vector mask = active_mask(metric, x0, b);
  // (Q^{-1} A^T)^T u = G^{-1} A u
  Vector w = metric.gram().solve(matvec(metric.A(), u));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= mask[i];
  Vector out = u;
  out -= matvec_t(metric.A(), w);
  return out;
}

}  // namespace safeopt
