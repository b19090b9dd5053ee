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
#include <cstdint>
#include <optional>
#include <vector>

#include "safeopt/cmdp_env.hpp"
#include "safeopt/meta_opt.hpp"
#include "safeopt/policy.hpp"

namespace safeopt {

enum class NavMethod { Fisar, ProjectedGradient };

/// How the recurrent optimizer is obtained for a navigation run: updated on
/// the task as the policy trains, or loaded and held fixed.
enum class PhiMode { Online, Pretrained };

struct NavTrainSettings {
  /// Policy updates per run; the curve has iterations + 1 points.
  std::size_t iterations = 300;
  /// Trajectories per gradient estimate.
  std::size_t trajectories = 24;
  bool constant_baseline = false;
  /// Std of the initial policy weights.
  double policy_init_std = 0.1;
  PhiMode phi_mode = PhiMode::Online;
  /// Step size of the projected-gradient method.
  double policy_lr = 0.001;

  void validate() const;
};

/// Batch estimate at one policy iterate.
struct NavIteration {
  double J = 0.0;
  /// Constraint values: mean discounted cost minus cap, per channel.
  Vector C;
};

/// Objective and constraints of a policy, estimated from fresh rollouts on
/// every evaluate(). Each call is logged in order.
class NavPolicyProblem final : public InnerProblem {
 public:
  NavPolicyProblem(NavConfig nav, PolicyConfig policy, std::size_t trajectories, bool constant_baseline,
                   std::uint64_t rollout_seed);

  std::size_t dim() const override { return dim_; }
  InnerEval evaluate(const Vector& theta) override;

  const std::vector<NavIteration>& history() const noexcept { return history_; }

 private:
  NavConfig nav_;
  GaussianMlpPolicy policy_;
  std::size_t trajectories_;
  bool constant_baseline_;
  std::size_t dim_;
  Rng rng_;
  std::vector<NavIteration> history_;
};

struct NavRunResult {
  std::vector<NavIteration> curve;
  /// Milliseconds spent up to each curve point.
  std::vector<double> wall_ms;
  Vector final_theta;
  /// Optimizer after online updates; empty for the projected-gradient method.
  std::optional<RecurrentOptimizer> phi;
};

/// Trains a policy from a seeded initial point. The initial policy and the
/// rollout stream depend only on the seed, so both methods start from the
/// same parameters and see the same first batch.
///
/// Fisar: steps come from the recurrent optimizer through the update
/// polytope, in segments of unroll.segment; with PhiMode::Online each
/// segment's meta-gradient updates phi with unroll.meta_rule at
/// unroll.meta_lr. ProjectedGradient: theta + policy_lr * project(gradJ)
/// on the same polytope.
NavRunResult train_nav(NavMethod method, const NavConfig& nav, const PolicyConfig& policy,
                       const NavTrainSettings& settings, const UnrollConfig& unroll, const KappaFn& kappa,
                       const RecurrentOptimizer* phi, std::uint64_t seed);

/// Initial policy parameters for a seed.
Vector initial_policy_parameters(const PolicyConfig& policy, double init_std, std::uint64_t seed);

}  // namespace safeopt
