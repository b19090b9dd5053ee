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

#include "safeopt/nav_train.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "safeopt/baselines.hpp"
#include "safeopt/constraint_dynamics.hpp"
#include "safeopt/error.hpp"

namespace safeopt {

namespace {

constexpr std::uint64_t kPolicyInitStream = 1;
constexpr std::uint64_t kRolloutStream = 2;

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

void NavTrainSettings::validate() const {
  require(iterations >= 1, ErrorCode::ConfigInvalid, "nav_train.iterations: must be >= 1");
  require(trajectories >= 1, ErrorCode::ConfigInvalid, "nav_train.trajectories: must be >= 1");
  require(policy_init_std >= 0.0 && std::isfinite(policy_init_std), ErrorCode::ConfigInvalid,
          "nav_train.policy_init_std: must be non-negative");
  require(policy_lr > 0.0 && std::isfinite(policy_lr), ErrorCode::ConfigInvalid,
          "nav_train.policy_lr: must be positive");
}

NavPolicyProblem::NavPolicyProblem(NavConfig nav, PolicyConfig policy, std::size_t trajectories,
                                   bool constant_baseline, std::uint64_t rollout_seed)
    : nav_(std::move(nav)),
      policy_(policy),
      trajectories_(trajectories),
      constant_baseline_(constant_baseline),
      dim_(policy_.parameter_count()),
      rng_(rollout_seed) {
  nav_.validate();
  require(trajectories_ >= 1, ErrorCode::EmptyBatch, "nav problem: need at least one trajectory per estimate");
}

InnerEval NavPolicyProblem::evaluate(const Vector& theta) {
  policy_.set_flat(theta);
  const ActionFn act = policy_.action_fn();
  std::vector<Trajectory> batch;
  batch.reserve(trajectories_);
  for (std::size_t k = 0; k < trajectories_; ++k) batch.push_back(rollout(nav_, act, rng_));
  PolicyGradientEstimate est = estimate_grads(policy_, batch, nav_.gamma, nav_.cost_caps, constant_baseline_);
  history_.push_back({est.J, est.C});
  return {est.J, std::move(est.gradJ), {std::move(est.C), std::move(est.gradC)}};
}

Vector initial_policy_parameters(const PolicyConfig& policy, double init_std, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kPolicyInitStream));
  return GaussianMlpPolicy::initial(policy, rng, init_std).flat();
}

NavRunResult train_nav(NavMethod method, const NavConfig& nav, const PolicyConfig& policy,
                       const NavTrainSettings& settings, const UnrollConfig& unroll, const KappaFn& kappa,
                       const RecurrentOptimizer* phi, std::uint64_t seed) {
  settings.validate();
  NavPolicyProblem problem(nav, policy, settings.trajectories, settings.constant_baseline,
                           derive_seed(seed, kRolloutStream));
  Vector theta = initial_policy_parameters(policy, settings.policy_init_std, seed);
  NavRunResult out;
  Stopwatch clock;

  if (method == NavMethod::ProjectedGradient) {
    for (std::size_t k = 0; k < settings.iterations; ++k) {
      const InnerEval ev = problem.evaluate(theta);
      out.wall_ms.push_back(clock.ms());
      const UpdateConstraints uc = prepare_update_constraints(ev.constraints, kappa, unroll.delta);
      theta = safe_update(theta, ev.objective_grad, uc.poly, uc.metric, settings.policy_lr).theta_next;
    }
    problem.evaluate(theta);
    out.wall_ms.push_back(clock.ms());
  } else {
    require(phi != nullptr, ErrorCode::InvalidArgument, "train_nav: the recurrent optimizer is required");
    UnrollConfig cfg = unroll;
    cfg.span = settings.iterations;
    cfg.validate();
    RecurrentOptimizer opt = *phi;
    AdaptiveState meta_state = AdaptiveState::make(cfg.meta_rule, opt.parameter_count());
    const bool online = settings.phi_mode == PhiMode::Online;
    UnrollSession session(problem, theta, opt.config());
    while (session.steps_done() < settings.iterations) {
      const std::size_t len = std::min(cfg.segment, settings.iterations - session.steps_done());
      const SegmentResult seg = session.run_segment(opt, cfg, kappa, len, online);
      if (online) {
        require(seg.phi_grad.all_finite(), ErrorCode::NonFiniteLoss, "train_nav: non-finite meta-gradient");
        opt.set_flat(baseline_step(meta_state, opt.flat(), seg.phi_grad, cfg.meta_lr));
      }
      // One timestamp per segment; points inside a segment share it.
      const double now = clock.ms();
      while (out.wall_ms.size() + 1 < problem.history().size()) out.wall_ms.push_back(now);
    }
    out.wall_ms.push_back(clock.ms());
    theta = session.theta();
    out.phi = std::move(opt);
  }
  out.curve = problem.history();
  out.final_theta = std::move(theta);
  return out;
}

}  // namespace safeopt
