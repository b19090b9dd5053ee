#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "safeopt/error.hpp"
#include "safeopt/policy.hpp"
#include "test_support.hpp"

using namespace safeopt;

namespace {

GaussianMlpPolicy random_policy(std::uint64_t seed, double std = 0.5) {
  Rng rng(seed);
  return GaussianMlpPolicy::initial({}, rng, std);
}

// Two start states, two actions, one step. The policy is a softmax over
// per-state logits theta[2 s + a].
struct TabularToy {
  std::array<double, 4> theta{0.3, -0.2, -0.5, 0.4};
  std::array<double, 4> reward{1.0, -0.5, 0.25, 2.0};
  std::array<double, 4> cost{0.0, 1.5, 0.8, 0.1};

  double prob(int s, int a) const {
    const double l0 = theta[2 * s];
    const double l1 = theta[2 * s + 1];
    const double m = std::max(l0, l1);
    const double z = std::exp(l0 - m) + std::exp(l1 - m);
    return std::exp(theta[2 * s + a] - m) / z;
  }

  // d/dtheta E[x] with s uniform, by enumerating both actions
  Vector exact_gradient(const std::array<double, 4>& x) const {
    Vector g(4);
    for (int s = 0; s < 2; ++s) {
      const double avg = prob(s, 0) * x[2 * s] + prob(s, 1) * x[2 * s + 1];
      for (int a = 0; a < 2; ++a) g[2 * s + a] = 0.5 * prob(s, a) * (x[2 * s + a] - avg);
    }
    return g;
  }

  ScoredSample draw(Rng& rng) const {
    const int s = rng.uniform() < 0.5 ? 0 : 1;
    const int a = rng.uniform() < prob(s, 0) ? 0 : 1;
    Vector score(4);
    for (int b = 0; b < 2; ++b) score[2 * s + b] = (b == a ? 1.0 : 0.0) - prob(s, b);
    return {score, reward[2 * s + a], Vector{cost[2 * s + a]}};
  }
};

void check_within_three_se(const std::vector<ScoredSample>& samples, const PolicyGradientEstimate& est,
                           const Vector& exact_j, const Vector& exact_c) {
  const double n = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < exact_j.size(); ++j) {
    double sj = 0.0, sjj = 0.0, sc = 0.0, scc = 0.0;
    for (const ScoredSample& s : samples) {
      const double xj = s.score[j] * s.G;
      const double xc = s.score[j] * s.costs[0];
      sj += xj;
      sjj += xj * xj;
      sc += xc;
      scc += xc * xc;
    }
    const double se_j = std::sqrt((sjj / n - (sj / n) * (sj / n)) / n);
    const double se_c = std::sqrt((scc / n - (sc / n) * (sc / n)) / n);
    CHECK(std::abs(est.gradJ[j] - exact_j[j]) <= 3.0 * se_j);
    CHECK(std::abs(est.gradC(0, j) - exact_c[j]) <= 3.0 * se_c);
  }
}

}  // namespace

TEST_CASE("gaussian_log_density: standard normal at zero") {
  const double logp = gaussian_log_density({0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0});
  CHECK(logp / 2.0 == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(logp / 2.0 == doctest::Approx(-0.918938533204672).epsilon(1e-14));
}

TEST_CASE("GaussianMlpPolicy: shape and initial std") {
  const GaussianMlpPolicy pol = random_policy(1);
  CHECK(pol.parameter_count() == 4 * 16 + 16 + 16 * 2 + 2 + 2);
  CHECK(pol.stddev()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pol.stddev()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("sample_action: determinism and sample mean") {
  const GaussianMlpPolicy pol = random_policy(2);
  const NavState s{{0.2, -0.4}, {0.1, 0.3}};
  Rng a(7), b(7);
  for (int k = 0; k < 10; ++k) {
    const ActionDraw x = pol.sample_action(s, a);
    const ActionDraw y = pol.sample_action(s, b);
    CHECK(x.action == y.action);
    CHECK(x.logp == y.logp);
    CHECK(x.logp == doctest::Approx(pol.log_prob(s, x.action)).epsilon(1e-14));
  }
  Rng rng(8);
  const int n = 100000;
  std::array<double, 2> sum{0.0, 0.0};
  for (int k = 0; k < n; ++k) {
    const ActionDraw d = pol.sample_action(s, rng);
    sum[0] += d.action[0];
    sum[1] += d.action[1];
  }
  const Vec2 mu = pol.mean(s);
  const Vec2 sd = pol.stddev();
  for (int d = 0; d < 2; ++d) CHECK(std::abs(sum[d] / n - mu[d]) <= 3.0 * sd[d] / std::sqrt(double(n)));
}

TEST_CASE("score: log-density gradient matches finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const GaussianMlpPolicy pol = random_policy(100 + trial, 0.6);
    std::vector<NavState> states;
    std::vector<Vec2> actions;
    for (int k = 0; k < 4; ++k) {
      states.push_back({{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}, {rng.normal(), rng.normal()}});
      actions.push_back({rng.normal(), rng.normal()});
    }
    const auto logp_at = [&](const Vector& theta) {
      GaussianMlpPolicy p = pol;
      p.set_flat(theta);
      double acc = 0.0;
      for (std::size_t k = 0; k < states.size(); ++k) acc += p.log_prob(states[k], actions[k]);
      return acc;
    };
    const auto sc = pol.score(states, actions);
    CHECK(sc.logp == doctest::Approx(logp_at(pol.flat())).epsilon(1e-12));
    const Vector fd = testing::central_difference(logp_at, pol.flat(), 1e-6);
    CHECK(testing::relative_error(sc.grad, fd) <= 1e-5);
  }
}

TEST_CASE("score: clamped log-std has zero gradient") {
  GaussianMlpPolicy pol = random_policy(3);
  Vector theta = pol.flat();
  const std::size_t n = theta.size();
  theta[n - 2] = -20.0;
  theta[n - 1] = -20.0;
  pol.set_flat(theta);
  CHECK(pol.stddev()[0] == doctest::Approx(std::exp(-5.0)));
  const auto sc = pol.score({{{0.1, 0.1}, {0.0, 0.0}}}, {{0.0, 0.01}});
  CHECK(sc.grad[n - 2] == 0.0);
  CHECK(sc.grad[n - 1] == 0.0);
}

TEST_CASE("score_function_estimate: unbiased on an enumerable toy") {
  const TabularToy toy;
  const Vector exact_j = toy.exact_gradient(toy.reward);
  const Vector exact_c = toy.exact_gradient(toy.cost);
  Rng rng(31);
  std::vector<ScoredSample> samples;
  for (int k = 0; k < 100000; ++k) samples.push_back(toy.draw(rng));
  const PolicyGradientEstimate plain = score_function_estimate(samples, Vector{0.5});
  check_within_three_se(samples, plain, exact_j, exact_c);
  const PolicyGradientEstimate offset = score_function_estimate(samples, Vector{0.5}, true);
  check_within_three_se(samples, offset, exact_j, exact_c);

  double expected_c = 0.0;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) expected_c += 0.5 * toy.prob(s, a) * toy.cost[2 * s + a];
  CHECK(std::abs(plain.C[0] - (expected_c - 0.5)) < 0.01);
}

TEST_CASE("estimate_grads: constant reward gives a zero-mean gradient") {
  const GaussianMlpPolicy pol = random_policy(4);
  NavConfig cfg;
  cfg.horizon = 5;
  Rng rng(5);
  const ActionFn act = pol.action_fn();
  const int n = 20000;
  std::vector<ScoredSample> samples;
  for (int k = 0; k < n; ++k) {
    const Trajectory t = rollout(cfg, act, rng);
    samples.push_back({pol.score(t.states, t.actions).grad, 1.0, Vector(3)});
  }
  const PolicyGradientEstimate est = score_function_estimate(samples, cfg.cost_caps);
  for (std::size_t j = 0; j < pol.parameter_count(); ++j) {
    double s2 = 0.0;
    for (const ScoredSample& s : samples) s2 += s.score[j] * s.score[j];
    const double se = std::sqrt(s2 / n / n);
    CHECK(std::abs(est.gradJ[j]) <= 3.0 * se + 1e-12);
  }
  std::vector<ScoredSample> zero = samples;
  for (ScoredSample& s : zero) s.G = 0.0;
  const PolicyGradientEstimate none = score_function_estimate(zero, cfg.cost_caps);
  CHECK(none.gradJ == Vector(pol.parameter_count()));
}

TEST_CASE("estimate_grads: degenerate policy is finite and reproducible") {
  GaussianMlpPolicy pol = random_policy(6);
  Vector theta = pol.flat();
  theta[theta.size() - 1] = theta[theta.size() - 2] = -30.0;
  pol.set_flat(theta);
  const NavConfig cfg;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Trajectory> batch;
    for (int k = 0; k < 4; ++k) batch.push_back(rollout(cfg, pol.action_fn(), rng));
    return estimate_grads(pol, batch, cfg.gamma, cfg.cost_caps);
  };
  const PolicyGradientEstimate a = run(12);
  const PolicyGradientEstimate b = run(12);
  CHECK(a.gradJ.all_finite());
  CHECK(a.gradC.all_finite());
  CHECK(a.gradJ == b.gradJ);
  CHECK(a.gradC == b.gradC);
  CHECK(a.J == b.J);
}

TEST_CASE("estimate_grads: batch order does not matter") {
  const GaussianMlpPolicy pol = random_policy(7);
  const NavConfig cfg;
  Rng rng(13);
  std::vector<Trajectory> batch;
  for (int k = 0; k < 6; ++k) batch.push_back(rollout(cfg, pol.action_fn(), rng));
  const PolicyGradientEstimate fwd = estimate_grads(pol, batch, cfg.gamma, cfg.cost_caps);
  std::reverse(batch.begin(), batch.end());
  std::swap(batch[1], batch[4]);
  const PolicyGradientEstimate perm = estimate_grads(pol, batch, cfg.gamma, cfg.cost_caps);
  CHECK(perm.J == doctest::Approx(fwd.J).epsilon(1e-13));
  CHECK(testing::relative_error(perm.gradJ, fwd.gradJ) <= 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(perm.C[i] == doctest::Approx(fwd.C[i]).epsilon(1e-13));
    CHECK(testing::relative_error(perm.gradC.row_vector(i), fwd.gradC.row_vector(i)) <= 1e-12);
  }
}

TEST_CASE("estimate_grads: empty batch") {
  const GaussianMlpPolicy pol;
  try {
    estimate_grads(pol, {}, 0.99, Vector{1.0, 1.0, 1.0});
    FAIL("expected EmptyBatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyBatch);
  }
}

TEST_CASE("GaussianMlpPolicy: checkpoint round trip is exact") {
  const GaussianMlpPolicy pol = random_policy(8, 0.7);
  std::stringstream buf;
  pol.save(buf);
  const GaussianMlpPolicy back = GaussianMlpPolicy::load(buf);
  CHECK(back.flat() == pol.flat());
  std::stringstream junk("safeopt-recurrent-optimizer 1\n");
  CHECK_THROWS_AS(GaussianMlpPolicy::load(junk), Error);
}
