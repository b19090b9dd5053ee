#include <cmath>
#include <sstream>

#include "doctest.h"
#include "safeopt/cmdp_env.hpp"
#include "safeopt/error.hpp"

using namespace safeopt;

namespace {

ActionDraw zero_action(const NavState&, Rng&) { return {}; }

ActionDraw noisy_action(const NavState&, Rng& rng) {
  return {{rng.normal(0.0, 1.5), rng.normal(0.0, 1.5)}, 0.0};
}

}  // namespace

TEST_CASE("env_step: worked examples") {
  const NavConfig cfg;
  SUBCASE("at the goal the reward is zero") {
    const EnvStepResult r = env_step(cfg, {cfg.goal, {0.0, 0.0}}, {0.0, 0.0});
    CHECK(r.reward == 0.0);
    CHECK(r.costs == Vector{0.0, 0.0, 0.0});
  }
  SUBCASE("obstacle center costs 2.5 on that channel only") {
    const EnvStepResult r = env_step(cfg, {cfg.obstacles[1].center, {0.0, 0.0}}, {0.0, 0.0});
    CHECK(r.costs == Vector{0.0, 2.5, 0.0});
  }
  SUBCASE("free space costs nothing") {
    const EnvStepResult r = env_step(cfg, {{0.5, -0.5}, {0.1, 0.0}}, {0.3, 0.2});
    CHECK(r.costs == Vector{0.0, 0.0, 0.0});
    CHECK(r.reward < 0.0);
  }
  SUBCASE("cost is taken at the post-step position") {
    // starts inside obstacle 0 and leaves it within one step
    const EnvStepResult r = env_step(cfg, {{-0.3, 0.2}, {0.0, 2.0}}, {0.0, 0.0});
    CHECK(r.next.position[1] == doctest::Approx(0.4));
    CHECK(r.costs[0] == 0.0);
  }
}

TEST_CASE("env_step: actions are clipped to the box") {
  const NavConfig cfg;
  const NavState s{{0.1, 0.2}, {0.3, -0.1}};
  const EnvStepResult big = env_step(cfg, s, {5.0, -7.0});
  const EnvStepResult unit = env_step(cfg, s, {1.0, -1.0});
  CHECK(big.next.position == unit.next.position);
  CHECK(big.next.velocity == unit.next.velocity);
}

TEST_CASE("env_step: exact double-integrator discretization") {
  const NavConfig cfg;
  const NavState s0{{-0.5, 0.6}, {0.2, -0.3}};
  const Vec2 a{0.7, -0.4};
  const NavState s2 = env_step(cfg, env_step(cfg, s0, a).next, a).next;
  const double t = 2.0 * cfg.dt;
  for (int d = 0; d < 2; ++d) {
    CHECK(s2.position[d] == doctest::Approx(s0.position[d] + s0.velocity[d] * t + 0.5 * a[d] * t * t).epsilon(1e-14));
    CHECK(s2.velocity[d] == doctest::Approx(s0.velocity[d] + a[d] * t).epsilon(1e-14));
  }
}

TEST_CASE("env_step: boundary channel, clamping and wall velocity") {
  const NavConfig cfg;
  const EnvStepResult r = env_step(cfg, {{0.99, -0.99}, {0.5, -0.5}}, {0.0, 0.0});
  CHECK(r.costs[2] == 1.0);
  CHECK(r.next.position == Vec2{1.0, -1.0});
  CHECK(r.next.velocity == Vec2{0.0, 0.0});
  // moving away from the wall keeps its velocity
  const EnvStepResult back = env_step(cfg, {{1.0, 0.0}, {-0.5, 0.0}}, {0.0, 0.0});
  CHECK(back.costs[2] == 0.0);
  CHECK(back.next.velocity[0] == -0.5);
}

TEST_CASE("env_step: obstacle costs are bounded") {
  const NavConfig cfg;
  Rng rng(11);
  for (int k = 0; k < 20000; ++k) {
    const NavState s{{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}, {rng.normal(), rng.normal()}};
    const EnvStepResult r = env_step(cfg, s, {rng.normal(0.0, 2.0), rng.normal(0.0, 2.0)});
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(r.costs[i] >= 0.0);
      CHECK(r.costs[i] <= 2.5);
    }
    CHECK(r.reward <= 0.0);
    for (int d = 0; d < 2; ++d) {
      CHECK(r.next.position[d] >= -1.0);
      CHECK(r.next.position[d] <= 1.0);
    }
  }
}

TEST_CASE("rollout: stationary under zero action") {
  const NavConfig cfg;
  const Trajectory t = rollout(cfg, zero_action, 5);
  REQUIRE(t.length() == cfg.horizon);
  const NavState& s0 = t.states.front();
  CHECK(std::abs(s0.position[0] + 0.8) <= 0.05);
  CHECK(std::abs(s0.position[1] + 0.8) <= 0.05);
  CHECK(s0.velocity == Vec2{0.0, 0.0});
  const double expected = -std::hypot(s0.position[0] - cfg.goal[0], s0.position[1] - cfg.goal[1]);
  for (std::size_t k = 0; k < t.length(); ++k) {
    CHECK(t.states[k].position == s0.position);
    CHECK(t.rewards[k] == expected);
  }
}

TEST_CASE("rollout: determinism per seed") {
  const NavConfig cfg;
  const Trajectory a = rollout(cfg, noisy_action, 42);
  const Trajectory b = rollout(cfg, noisy_action, 42);
  const Trajectory c = rollout(cfg, noisy_action, 43);
  CHECK(a.rewards == b.rewards);
  CHECK(a.costs == b.costs);
  CHECK(a.actions == b.actions);
  CHECK(a.rewards != c.rewards);
}

TEST_CASE("discounted_totals: examples") {
  NavConfig cfg;
  cfg.horizon = 1;
  Trajectory one;
  one.rewards = {-1.0};
  one.costs = Matrix::from_rows({{2.5, 0.0, 0.0}});
  const DiscountedTotals a = discounted_totals(one, 0.99, Vector{0.0, 0.5, 0.5});
  CHECK(a.C == Vector{2.5, -0.5, -0.5});
  CHECK(a.G == -1.0);

  Trajectory flat;
  const std::size_t h = 100;
  flat.rewards.assign(h, -0.25);
  flat.costs = Matrix(h, 3);
  const DiscountedTotals b = discounted_totals(flat, 0.99, Vector{0.5, 0.5, 0.5});
  CHECK(b.G == doctest::Approx(-0.25 * (1.0 - std::pow(0.99, 100)) / (1.0 - 0.99)).epsilon(1e-13));
  CHECK(b.C == Vector{-0.5, -0.5, -0.5});

  CHECK_THROWS_AS(discounted_totals(flat, 0.99, Vector{0.5}), Error);
}

TEST_CASE("discounted_totals: matches brute-force summation exactly") {
  const NavConfig cfg;
  const double gamma = 0.97;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Trajectory t = rollout(cfg, noisy_action, seed);
    const DiscountedTotals tot = discounted_totals(t, gamma, cfg.cost_caps);
    double g = 0.0;
    Vector c(3);
    for (std::size_t k = 0; k < t.length(); ++k) {
      double w = 1.0;
      for (std::size_t j = 0; j < k; ++j) w *= gamma;
      g += w * t.rewards[k];
      for (std::size_t i = 0; i < 3; ++i) c[i] += w * t.costs(k, i);
    }
    CHECK(tot.G == g);
    CHECK(tot.raw_costs == c);
    for (std::size_t i = 0; i < 3; ++i) CHECK(tot.C[i] == c[i] - cfg.cost_caps[i]);
  }
}

TEST_CASE("NavConfig::validate") {
  CHECK_NOTHROW(NavConfig{}.validate());
  auto code_of = [](const NavConfig& c) {
    try {
      c.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  NavConfig bad;
  bad.gamma = 1.0;
  CHECK(code_of(bad) == ErrorCode::ConfigInvalid);
  bad = NavConfig{};
  bad.obstacles[0].center = {0.9, 0.0};
  CHECK(code_of(bad) == ErrorCode::ConfigInvalid);
  bad = NavConfig{};
  bad.cost_caps = Vector{1.0};
  CHECK(code_of(bad) == ErrorCode::ConfigInvalid);
  bad = NavConfig{};
  bad.horizon = 0;
  CHECK(code_of(bad) == ErrorCode::ConfigInvalid);
}

TEST_CASE("write_trajectory_csv: header and row count") {
  NavConfig cfg;
  cfg.horizon = 4;
  const Trajectory t = rollout(cfg, noisy_action, 9);
  std::ostringstream out;
  write_trajectory_csv(out, t);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,px,py,vx,vy,ax,ay,reward,cost_0,cost_1,cost_2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}
