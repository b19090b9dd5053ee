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

#include "safeopt/ndcore/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "safeopt/error.hpp"

namespace safeopt {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_same_size(std::size_t a, std::size_t b, const char* op) {
  require(a == b, ErrorCode::DimensionMismatch,
          std::string(op) + ": size " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::UnrecordedLeaf: return "UnrecordedLeaf";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

// ---- Vector ---------------------------------------------------------------

bool Vector::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Vector& Vector::operator+=(const Vector& rhs) {
  check_same_size(size(), rhs.size(), "Vector +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& rhs) {
  check_same_size(size(), rhs.size(), "Vector -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Vector& Vector::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Vector operator+(Vector lhs, const Vector& rhs) { return lhs += rhs; }
Vector operator-(Vector lhs, const Vector& rhs) { return lhs -= rhs; }
Vector operator*(double s, Vector v) { return v *= s; }

double dot(const Vector& a, const Vector& b) {
  check_same_size(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

double norm_inf(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void axpy(double alpha, const Vector& x, Vector& y) {
  check_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// ---- Matrix ---------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  require(data_.size() == rows * cols, ErrorCode::DimensionMismatch,
          "Matrix: " + std::to_string(data_.size()) + " entries for " +
              std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorCode::DimensionMismatch, "Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(const Vector& v) { return Matrix(v.size(), 1, v.values()); }
Matrix Matrix::row(const Vector& v) { return Matrix(1, v.size(), v.values()); }

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
  require(same_shape(rhs), ErrorCode::DimensionMismatch,
          "Matrix +=: " + shape(*this) + " vs " + shape(rhs));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
  require(same_shape(rhs), ErrorCode::DimensionMismatch,
          "Matrix -=: " + shape(*this) + " vs " + shape(rhs));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
Matrix operator*(double s, Matrix m) { return m *= s; }

// The three products below accumulate every output entry over the inner
// index in increasing order, independent of the other rows. Row-wise
// independence keeps coordinatewise computations bit-identical under row
// permutation and duplication, which a blocked GEMM does not promise.

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::DimensionMismatch,
          "matmul: " + shape(a) + " * " + shape(b));
  Matrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t cols = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* __restrict o = out.data() + i * cols;
    const double* ar = a.data() + i * inner;
    for (std::size_t l = 0; l < inner; ++l) {
      const double s = ar[l];
      const double* __restrict br = b.data() + l * cols;
      for (std::size_t j = 0; j < cols; ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorCode::DimensionMismatch,
          "matmul_tn: " + shape(a) + "^T * " + shape(b));
  Matrix out(a.cols(), b.cols());
  const std::size_t cols = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* ar = a.data() + r * a.cols();
    const double* __restrict br = b.data() + r * cols;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = ar[i];
      double* __restrict o = out.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorCode::DimensionMismatch,
          "matmul_nt: " + shape(a) + " * " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data() + i * inner;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.data() + j * inner;
      double acc = 0.0;
      for (std::size_t l = 0; l < inner; ++l) acc += ar[l] * br[l];
      out(i, j) = acc;
    }
  }
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  check_same_size(a.cols(), x.size(), "matvec");
  Vector y(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row_span(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector matvec_t(const Matrix& a, const Vector& x) {
  check_same_size(a.rows(), x.size(), "matvec_t");
  Vector y(a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row_span(r);
    const double xr = x[r];
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * xr;
  }
  return y;
}

double norm_inf(const Matrix& m) {
  double best = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (double x : m.row_span(r)) acc += std::abs(x);
    best = std::max(best, acc);
  }
  return best;
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double x : m.values()) best = std::max(best, std::abs(x));
  return best;
}

double asymmetry(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::DimensionMismatch, "asymmetry: " + shape(m));
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  return worst;
}

// ---- Cholesky -------------------------------------------------------------

Cholesky::Cholesky(const Matrix& spd) : source_(spd), lower_(spd.rows(), spd.cols()) {
  require(spd.rows() == spd.cols(), ErrorCode::DimensionMismatch,
          "cholesky: matrix is " + shape(spd));
  require(spd.all_finite(), ErrorCode::NonFiniteInput, "cholesky: non-finite entry");
  const double scale = std::max(1.0, max_abs(spd));
  require(asymmetry(spd) <= 1e-12 * scale, ErrorCode::InvalidArgument,
          "cholesky: matrix is not symmetric");

  const std::size_t n = spd.rows();
  min_pivot_sq_ = std::numeric_limits<double>::infinity();
  max_pivot_sq_ = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double diag = spd(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= lower_(j, k) * lower_(j, k);
    if (!(diag > 0.0)) {
      fail(ErrorCode::NotPositiveDefinite,
           "cholesky: pivot " + std::to_string(j) + " is " + std::to_string(diag));
    }
    min_pivot_sq_ = std::min(min_pivot_sq_, diag);
    max_pivot_sq_ = std::max(max_pivot_sq_, diag);
    const double ljj = std::sqrt(diag);
    lower_(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = spd(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= lower_(i, k) * lower_(j, k);
      lower_(i, j) = acc / ljj;
    }
  }
  if (n == 0) min_pivot_sq_ = 0.0;
}

void Cholesky::solve_in_place(double* x) const {
  const std::size_t n = dim();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = x[i];
    for (std::size_t k = 0; k < i; ++k) acc -= lower_(i, k) * x[k];
    x[i] = acc / lower_(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= lower_(k, ii) * x[k];
    x[ii] = acc / lower_(ii, ii);
  }
}

Vector Cholesky::solve(const Vector& rhs) const {
  require(rhs.size() == dim(), ErrorCode::DimensionMismatch, "cholesky solve: rhs size");
  const std::size_t n = dim();
  Vector x = rhs;
  solve_in_place(x.data());
  Vector residual(n);
  for (std::size_t i = 0; i < n; ++i) {
    long double acc = rhs[i];
    for (std::size_t k = 0; k < n; ++k)
      acc -= static_cast<long double>(source_(i, k)) * static_cast<long double>(x[k]);
    residual[i] = static_cast<double>(acc);
  }
  solve_in_place(residual.data());
  x += residual;
  return x;
}

Matrix Cholesky::solve(const Matrix& rhs) const {
  require(rhs.rows() == dim(), ErrorCode::DimensionMismatch,
          "cholesky solve: rhs is " + shape(rhs));
  Matrix out(rhs.rows(), rhs.cols());
  Vector column(rhs.rows());
  for (std::size_t c = 0; c < rhs.cols(); ++c) {
    for (std::size_t r = 0; r < rhs.rows(); ++r) column[r] = rhs(r, c);
    const Vector x = solve(column);
    for (std::size_t r = 0; r < rhs.rows(); ++r) out(r, c) = x[r];
  }
  return out;
}

Matrix cholesky_solve(const Matrix& spd, const Matrix& rhs) { return Cholesky(spd).solve(rhs); }

}  // namespace safeopt
