#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "safeopt/error.hpp"
#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/ndcore/rng.hpp"
#include "safeopt/ndcore/tape.hpp"
#include "test_support.hpp"

using namespace safeopt;
using namespace safeopt::testing;

namespace {

// S = U diag(eigs) U^T with U orthogonal from a QR of a Gaussian matrix.
Matrix spd_with_condition(Rng& rng, std::size_t n, double condition) {
  Eigen::MatrixXd g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd u = qr.householderQ();
  Eigen::VectorXd eig(n);
  for (std::size_t i = 0; i < n; ++i)
    eig(i) = std::pow(condition, -static_cast<double>(i) / static_cast<double>(n - 1));
  Eigen::MatrixXd s = u * eig.asDiagonal() * u.transpose();
  s = 0.5 * (s + s.transpose()).eval();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = s(i, j);
  return out;
}

// ||S X - B||_inf / ||B||_inf with the residual accumulated in extended
// precision; a double-precision product cannot resolve 1e-9 at cond 1e8.
double residual_ratio(const Matrix& s, const Matrix& x, const Matrix& b) {
  Matrix r(b.rows(), b.cols());
  for (std::size_t i = 0; i < b.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = -static_cast<long double>(b(i, j));
      for (std::size_t k = 0; k < s.cols(); ++k)
        acc += static_cast<long double>(s(i, k)) * static_cast<long double>(x(k, j));
      r(i, j) = static_cast<double>(acc);
    }
  }
  return norm_inf(r) / norm_inf(b);
}

}  // namespace

TEST_CASE("cholesky_solve: identity and scalar") {
  CHECK(cholesky_solve(Matrix::identity(2), Matrix::identity(2)) == Matrix::identity(2));
  const Matrix x = cholesky_solve(Matrix::from_rows({{4.0}}), Matrix::from_rows({{2.0}}));
  CHECK(x(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("cholesky_solve: random SPD residual") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) l(i, j) = rng.normal();
      l(i, i) = 0.5 + rng.uniform();
    }
    const Matrix s = matmul_nt(l, l);
    const Matrix b = random_matrix(rng, n, 3);
    const Matrix x = cholesky_solve(s, b);
    CHECK(residual_ratio(s, x, b) <= 1e-9);
  }
}

TEST_CASE("cholesky_solve: residual bound up to condition 1e8") {
  Rng rng(12);
  for (double cond : {1e2, 1e5, 1e8}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix s = spd_with_condition(rng, 10, cond);
      const Matrix b = random_matrix(rng, 10, 4);
      const Matrix x = cholesky_solve(s, b);
      CHECK(residual_ratio(s, x, b) <= 1e-9);
    }
  }
}

TEST_CASE("cholesky_solve: errors") {
  const Matrix indefinite = Matrix::from_rows({{1.0, 2.0}, {2.0, 1.0}});
  try {
    cholesky_solve(indefinite, Matrix::identity(2));
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPositiveDefinite);
  }
  const Matrix asym = Matrix::from_rows({{2.0, 1.0}, {0.0, 2.0}});
  CHECK_THROWS_AS(cholesky_solve(asym, Matrix::identity(2)), Error);
  CHECK_THROWS_AS(cholesky_solve(Matrix::identity(2), Matrix::identity(3)), Error);
}

TEST_CASE("tape: x^2 and constants") {
  Tape tape;
  const Var x = tape.parameter(Matrix(1, 1, 3.0));
  const Var y = tape.mul(x, x);
  tape.backward(y);
  CHECK(tape.grad(x)(0, 0) == 6.0);

  Tape flat;
  const Var p = flat.parameter(Matrix(1, 1, 3.0));
  const Var c = flat.constant(Matrix(1, 1, 7.0));
  flat.backward(flat.sum(c));
  CHECK(flat.grad(p)(0, 0) == 0.0);
}

TEST_CASE("tape: unrecorded leaf") {
  Tape a;
  Tape b;
  const Var pa = a.parameter(Matrix(1, 1, 1.0));
  const Var pb = b.parameter(Matrix(1, 1, 1.0));
  const Var c = a.constant(Matrix(1, 1, 1.0));
  a.backward(a.mul(pa, pa));
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of([&] { (void)a.grad(pb); }) == ErrorCode::UnrecordedLeaf);
  CHECK(code_of([&] { (void)a.grad(c); }) == ErrorCode::UnrecordedLeaf);
  CHECK(code_of([&] { (void)a.grad(Var{}); }) == ErrorCode::UnrecordedLeaf);

  Tape fresh;
  const Var q = fresh.parameter(Matrix(1, 1, 1.0));
  CHECK(code_of([&] { (void)fresh.grad(q); }) == ErrorCode::UnrecordedLeaf);
  const Var wide = fresh.parameter(Matrix(1, 2, 1.0));
  CHECK_THROWS_AS(fresh.backward(wide), Error);
}

namespace {

// Every primitive in one expression; each op's partials are exercised.
double primitive_mix(const Vector& flat, Vector* grad) {
  Tape t;
  const Var a = t.parameter(reshape(Vector(std::vector<double>(flat.begin(), flat.begin() + 6)), 2, 3));
  const Var b = t.parameter(reshape(Vector(std::vector<double>(flat.begin() + 6, flat.begin() + 12)), 3, 2));
  const Var c = t.parameter(reshape(Vector(std::vector<double>(flat.begin() + 12, flat.end())), 2, 2));
  const Var ab = t.matmul(a, b);
  const Var s1 = t.add(t.tanh(ab), t.sigmoid(c));
  const Var s2 = t.sub(t.mul(s1, c), t.scale(t.exp(t.scale(c, 0.3)), 0.5));
  const Var pos = t.add(t.mul(c, c), t.constant(Matrix(2, 2, 1.0)));
  const Var s3 = t.div(s2, pos);
  const Var s4 = t.add(s3, t.log(pos));
  const Var s5 = t.max_const(s4, 0.1);
  const Var root = t.sum(t.mul(s5, s4));
  if (grad != nullptr) {
    t.backward(root);
    const Var params[] = {a, b, c};
    *grad = t.gradient(params);
  }
  return t.scalar(root);
}

}  // namespace

TEST_CASE("tape: every primitive matches central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const Vector x = rng.normal_vector(16);
    Vector g;
    primitive_mix(x, &g);
    const Vector fd = central_difference([](const Vector& v) { return primitive_mix(v, nullptr); }, x);
    // max_const kinks are measure zero; skip draws that land near one.
    CHECK(relative_error(g, fd) <= 1e-5);
  }
}

TEST_CASE("tape: two-layer tanh MLP matches central differences") {
  Rng rng(5);
  const std::size_t in = 4, hidden = 8, out = 1, batch = 3;
  const Matrix x = random_matrix(rng, batch, in);
  auto mlp = [&](const Vector& p, Vector* grad) {
    std::size_t o = 0;
    auto take = [&](std::size_t r, std::size_t c) {
      Matrix m(r, c, std::vector<double>(p.begin() + static_cast<long>(o),
                                         p.begin() + static_cast<long>(o + r * c)));
      o += r * c;
      return m;
    };
    Tape t;
    const Var w1 = t.parameter(take(in, hidden));
    const Var b1 = t.parameter(take(1, hidden));
    const Var w2 = t.parameter(take(hidden, out));
    const Var b2 = t.parameter(take(1, out));
    const Var ones = t.constant(Matrix(batch, 1, 1.0));
    const Var xin = t.constant(x);
    const Var h = t.tanh(t.add(t.matmul(xin, w1), t.matmul(ones, b1)));
    const Var y = t.add(t.matmul(h, w2), t.matmul(ones, b2));
    const Var root = t.sum(t.tanh(y));
    if (grad != nullptr) {
      t.backward(root);
      const Var params[] = {w1, b1, w2, b2};
      *grad = t.gradient(params);
    }
    return t.scalar(root);
  };
  const Vector p = rng.normal_vector(in * hidden + hidden + hidden * out + out, 0.7);
  Vector g;
  mlp(p, &g);
  const Vector fd = central_difference([&](const Vector& v) { return mlp(v, nullptr); }, p);
  CHECK(relative_error(g, fd) <= 1e-5);
}

TEST_CASE("rng: determinism") {
  Rng a(0);
  Rng b(0);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
  Rng c(1);
  Rng d(0);
  CHECK(c.uniform() != d.uniform());
}

TEST_CASE("rng: moments of 1e6 draws") {
  Rng rng(2024);
  double usum = 0.0;
  double nsum = 0.0;
  double nsq = 0.0;
  const int count = 1000000;
  for (int i = 0; i < count; ++i) {
    usum += rng.uniform();
    const double z = rng.normal();
    nsum += z;
    nsq += z * z;
  }
  CHECK(std::abs(usum / count - 0.5) < 5e-3);
  CHECK(std::abs(nsum / count) < 5e-3);
  CHECK(std::abs(nsq / count - 1.0) < 1e-2);
}

TEST_CASE("rng: uniform stays in [0, 1) and below() is in range") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7);
  }
}
