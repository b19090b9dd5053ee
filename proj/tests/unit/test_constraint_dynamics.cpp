#include <cmath>
#include <functional>

#include "doctest.h"
#include "safeopt/constraint_dynamics.hpp"
#include "safeopt/error.hpp"
#include "test_support.hpp"

using namespace safeopt;

namespace {

// C(theta) = ||theta||^2 - 1 with its exact gradient.
ConstraintEval disk(const Vector& theta) {
  ConstraintEval e{Vector{dot(theta, theta) - 1.0}, Matrix(1, theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i) e.gradients(0, i) = 2.0 * theta[i];
  return e;
}

struct Trace {
  std::vector<double> values;
  std::vector<double> lyapunov_slack;  // grad C . dir + alpha(C), must be <= 0
};

Trace run_disk(Vector theta, double slope, double beta, int steps,
               const std::function<Vector(const Vector&)>& raw) {
  Trace t;
  const KappaFn kappa{slope};
  for (int k = 0; k < steps; ++k) {
    const ConstraintEval cons = disk(theta);
    t.values.push_back(cons.values[0]);
    const UpdateConstraints uc = prepare_update_constraints(cons, kappa, 1.0);
    const SafeUpdate up = safe_update(theta, raw(theta), uc.poly, uc.metric, beta);
    double along = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) along += cons.gradients(0, i) * up.dir[i];
    t.lyapunov_slack.push_back(along + kappa(cons.values[0]));
    theta = up.theta_next;
  }
  t.values.push_back(disk(theta).values[0]);
  return t;
}

}  // namespace

TEST_CASE("build_update_polytope: assembly") {
  const ConstraintEval cons{Vector{0.5}, Matrix::from_rows({{1.0, 0.0}})};
  const Polytope poly = build_update_polytope(cons, KappaFn{20.0});
  CHECK(poly.A == Matrix::from_rows({{1.0, 0.0}}));
  CHECK(poly.b == Vector{-10.0});

  const Polytope boundary = build_update_polytope({Vector{0.0}, Matrix::from_rows({{0.3, 1.0}})}, KappaFn{7.0});
  CHECK(boundary.b[0] == 0.0);
  const Polytope slack = build_update_polytope({Vector{-1.0}, Matrix::from_rows({{0.3, 1.0}})}, KappaFn{2.0});
  CHECK(slack.b == Vector{2.0});
}

TEST_CASE("build_update_polytope: errors") {
  const ConstraintEval parallel{Vector{1.0, 2.0}, Matrix::from_rows({{1.0, 1.0}, {2.0, 2.0}})};
  try {
    build_update_polytope(parallel, KappaFn{1.0});
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
  CHECK_THROWS_AS(build_update_polytope({Vector{1.0}, Matrix::from_rows({{1.0}})}, KappaFn{0.0}), Error);
  CHECK_THROWS_AS(build_update_polytope({Vector{1.0, 2.0}, Matrix::from_rows({{1.0}})}, KappaFn{1.0}), Error);
}

TEST_CASE("select_independent_rows: duplicates keep the larger violation") {
  const ConstraintEval cons{Vector{0.1, 0.9, -0.5, 0.2},
                            Matrix::from_rows({{1.0, 1.0, 0.0},
                                               {2.0, 2.0, 0.0},
                                               {0.0, 0.0, 0.0},
                                               {0.0, 1.0, 1.0}})};
  const RowSelection sel = select_independent_rows(cons);
  CHECK(sel.kept_rows == std::vector<std::size_t>{1, 3});
  CHECK(sel.dropped_rows == std::vector<std::size_t>{0, 2});
  CHECK(sel.kept.values == Vector{0.9, 0.2});
}

TEST_CASE("select_independent_rows: dependent triple drops least violated") {
  const ConstraintEval cons{Vector{3.0, 1.0, 2.0},
                            Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}})};
  const RowSelection sel = select_independent_rows(cons);
  CHECK(sel.kept_rows == std::vector<std::size_t>{0, 2});
}

TEST_CASE("safe_update: worked examples") {
  SUBCASE("interior raw direction is kept") {
    const Polytope poly{Matrix::from_rows({{1.0, 0.0}}), Vector{1.0}};
    const ProjectionMetric metric(poly.A, 1.0);
    const SafeUpdate up = safe_update(Vector{1.0, 1.0}, Vector{0.5, 2.0}, poly, metric, 0.1);
    CHECK(up.dir == Vector{0.5, 2.0});
    CHECK(up.theta_next[0] == doctest::Approx(1.05));
    CHECK(up.theta_next[1] == doctest::Approx(1.2));
  }
  SUBCASE("zero raw direction against an active bound") {
    const Polytope poly{Matrix::from_rows({{1.0, 0.0}}), Vector{-10.0}};
    const ProjectionMetric metric(poly.A, 1.0);
    const SafeUpdate up = safe_update(Vector{0.0, 0.0}, Vector{0.0, 0.0}, poly, metric, 0.001);
    CHECK(up.dir[0] == doctest::Approx(-10.0).epsilon(1e-15));
    CHECK(up.dir[1] == 0.0);
    CHECK(up.theta_next[0] == doctest::Approx(-0.01).epsilon(1e-15));
    CHECK(up.theta_next[1] == 0.0);
  }
  SUBCASE("errors") {
    const Polytope poly{Matrix::from_rows({{1.0, 0.0}}), Vector{0.0}};
    const ProjectionMetric metric(poly.A, 1.0);
    CHECK_THROWS_AS(safe_update(Vector{0.0, 0.0}, Vector{0.0, 0.0}, poly, metric, 0.0), Error);
    const ProjectionMetric other(Matrix::from_rows({{0.0, 1.0}}), 1.0);
    CHECK_THROWS_AS(safe_update(Vector{0.0, 0.0}, Vector{0.0, 0.0}, poly, other, 0.1), Error);
  }
}

TEST_CASE("disk toy: monotone decay under the Lyapunov condition") {
  for (double slope : {1.0, 5.0, 20.0}) {
    const Trace t = run_disk(Vector{2.0, 0.0}, slope, 1e-3, 3000, [](const Vector& th) {
      return Vector(th.size());
    });
    bool reached = false;
    for (std::size_t k = 0; k + 1 < t.values.size(); ++k) {
      // Below ~1e-12 the value is rounding noise in ||theta||^2 - 1.
      if (t.values[k] > 1e-12) CHECK(t.values[k + 1] < t.values[k]);
      if (t.values[k] > 0.0) CHECK(t.values[k + 1] <= t.values[k] + 1e-15);
      reached = reached || t.values[k] <= 1e-6;
    }
    for (double s : t.lyapunov_slack) CHECK(s <= 1e-9);
    if (slope >= 5.0) CHECK(reached);
  }
}

TEST_CASE("disk toy: first-order decay bound") {
  // C_{k+1} <= (1 - beta slope) C_k + 10 beta^2 while C_k > 0. The residual
  // here is (beta slope)^2 C^2 / (4 (C + 1)), so the bound needs
  // slope^2 C^2 / (4 (C + 1)) <= 10; slopes are chosen inside that regime.
  for (double slope : {0.5, 1.0, 2.0, 4.0}) {
    for (double beta : {1e-3, 0.1 / slope}) {
      const Trace t = run_disk(Vector{0.0, 2.0}, slope, beta, 400, [](const Vector& th) {
        return Vector(th.size());
      });
      for (std::size_t k = 0; k + 1 < t.values.size(); ++k) {
        if (t.values[k] > 0.0)
          CHECK(t.values[k + 1] <= (1.0 - beta * slope) * t.values[k] + 10.0 * beta * beta);
      }
    }
  }
}

TEST_CASE("disk toy: forward invariance with an outward-pulling objective") {
  // raw direction ascends -||theta - target||^2 with the target outside the disk
  for (const Vector& start : {Vector{2.0, 0.0}, Vector{0.2, -0.1}}) {
    const Vector target{2.0, 2.0};
    const Trace t = run_disk(start, 20.0, 1e-3, 4000, [&](const Vector& th) {
      return 2.0 * (target - th);
    });
    std::size_t first_small = t.values.size();
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      if (t.values[k] <= 1e-6) {
        first_small = k;
        break;
      }
    }
    REQUIRE(first_small < t.values.size());
    for (std::size_t j = first_small; j < t.values.size(); ++j) CHECK(t.values[j] <= 1e-6);
    for (double s : t.lyapunov_slack) CHECK(s <= 1e-9);
  }
}
