#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "safeopt/baselines.hpp"
#include "safeopt/error.hpp"

using namespace safeopt;

namespace {

Vector quad_grad(const Vector& x) {
  // Same operation order as the fixture generator.
  return Vector{(3.0 * x[0] + 0.5 * x[1]) - 1.0, (0.5 * x[0] + 1.0 * x[1]) - -2.0};
}

struct FixtureRow {
  double lr;
  int step;
  double x0;
  double x1;
};

std::map<std::string, std::vector<FixtureRow>> load_fixture() {
  std::ifstream in(SAFEOPT_FIXTURE_DIR "/baseline_traces.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "rule,lr,step,x0,x1");
  std::map<std::string, std::vector<FixtureRow>> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string rule, lr, step, x0, x1;
    std::getline(ss, rule, ',');
    std::getline(ss, lr, ',');
    std::getline(ss, step, ',');
    std::getline(ss, x0, ',');
    std::getline(ss, x1, ',');
    out[rule].push_back({std::strtod(lr.c_str(), nullptr), std::stoi(step),
                         std::strtod(x0.c_str(), nullptr), std::strtod(x1.c_str(), nullptr)});
  }
  return out;
}

}  // namespace

TEST_CASE("baseline_step: worked examples") {
  AdaptiveState plain = AdaptiveState::make(BaselineRule::Plain, 1);
  CHECK(baseline_step(plain, Vector{1.0}, Vector{2.0}, 0.1)[0] == doctest::Approx(0.8).epsilon(1e-15));

  AdaptiveState adam = AdaptiveState::make(BaselineRule::Adam, 1);
  const Vector after = baseline_step(adam, Vector{0.0}, Vector{1.0}, 0.001);
  CHECK(-after[0] == doctest::Approx(0.001 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(adam.step == 1);

  for (BaselineRule rule : {BaselineRule::Plain, BaselineRule::Adam, BaselineRule::RmsProp}) {
    AdaptiveState s = AdaptiveState::make(rule, 3);
    const Vector theta{0.5, -1.0, 2.0};
    CHECK(baseline_step(s, theta, Vector(3), 0.3) == theta);
  }
}

TEST_CASE("baseline_step: errors") {
  AdaptiveState s = AdaptiveState::make(BaselineRule::Adam, 2);
  auto code = [&](const Vector& theta, const Vector& g, double lr) {
    try {
      baseline_step(s, theta, g, lr);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode{};
  };
  CHECK(code(Vector{0.0, 0.0}, Vector{NAN, 0.0}, 0.1) == ErrorCode::NonFiniteInput);
  CHECK(code(Vector{INFINITY, 0.0}, Vector{0.0, 0.0}, 0.1) == ErrorCode::NonFiniteInput);
  CHECK(code(Vector{0.0, 0.0}, Vector{0.0, 0.0}, 0.0) == ErrorCode::InvalidArgument);
  CHECK(code(Vector{0.0}, Vector{0.0}, 0.1) == ErrorCode::DimensionMismatch);
  CHECK(parse_rule("rmsprop") == BaselineRule::RmsProp);
  CHECK_THROWS_AS(parse_rule("sgd2"), Error);
}

TEST_CASE("baseline_step: 10-step traces match the stored fixture bit-exactly") {
  const auto fixture = load_fixture();
  REQUIRE(fixture.size() == 3);
  for (const auto& [name, rows] : fixture) {
    REQUIRE(rows.size() == 10);
    AdaptiveState s = AdaptiveState::make(parse_rule(name), 2);
    Vector x{1.5, -0.5};
    for (const FixtureRow& row : rows) {
      x = baseline_step(s, x, quad_grad(x), row.lr);
      INFO(name << " step " << row.step);
      CHECK(x[0] == row.x0);
      CHECK(x[1] == row.x1);
    }
  }
}

TEST_CASE("projected_pg_step") {
  SUBCASE("slack polytope gives the plain ascent step") {
    const Polytope poly{Matrix::from_rows({{1.0, 1.0}}), Vector{100.0}};
    const ProjectionMetric metric(poly.A, 1.0);
    const Vector theta{0.3, 0.4};
    const Vector g{1.0, -2.0};
    const Vector got = projected_pg_step(theta, g, poly, metric, 0.01);
    CHECK(got[0] == 0.3 + 0.01 * 1.0);
    CHECK(got[1] == 0.4 + 0.01 * -2.0);
  }
  SUBCASE("hand example") {
    const Polytope poly{Matrix::from_rows({{1.0, 0.0}}), Vector{-10.0}};
    const ProjectionMetric metric(poly.A, 1.0);
    const Vector got = projected_pg_step(Vector{1.0, 2.0}, Vector{0.0, 0.0}, poly, metric, 0.001);
    CHECK(got[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-15));
    CHECK(got[1] == 2.0);
  }
  SUBCASE("gradient across an active halfspace is turned back") {
    const Vector grad_c{1.0, 1.0};
    const Polytope poly{Matrix::row(grad_c), Vector{0.0}};
    const ProjectionMetric metric(poly.A, 1.0);
    const Vector theta{0.0, 0.0};
    const Vector next = projected_pg_step(theta, Vector{3.0, -1.0}, poly, metric, 1.0);
    CHECK(dot(grad_c, next - theta) <= 1e-10);
  }
}
