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

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/ndcore/rng.hpp"

namespace safeopt {

using Vec2 = std::array<double, 2>;

struct Obstacle {
  Vec2 center{0.0, 0.0};
  double radius = 0.25;
};

/// 2D point mass with double-integrator dynamics. Cost channels are one per
/// obstacle followed by one boundary channel.
struct NavConfig {
  Vec2 goal{0.8, 0.8};
  std::vector<Obstacle> obstacles{{{-0.3, 0.0}, 0.25}, {{0.3, 0.3}, 0.25}};
  Vec2 bounds_lo{-1.0, -1.0};
  Vec2 bounds_hi{1.0, 1.0};
  Vec2 start{-0.8, -0.8};
  /// Start position is uniform in start +- start_jitter per axis.
  double start_jitter = 0.05;
  double dt = 0.1;
  std::size_t horizon = 100;
  double gamma = 0.99;
  /// Budgets, one per channel: obstacles first, boundary last.
  Vector cost_caps{2.0, 2.0, 1.0};
  double action_limit = 1.0;

  std::size_t channels() const noexcept { return obstacles.size() + 1; }
  /// Throws ConfigInvalid naming the offending field.
  void validate() const;
};

struct NavState {
  Vec2 position{0.0, 0.0};
  Vec2 velocity{0.0, 0.0};
};

struct EnvStepResult {
  NavState next;
  double reward = 0.0;
  Vector costs;
};

/// Clips a to the action box, advances p' = p + v dt + a dt^2 / 2 and
/// v' = v + a dt, and scores the post-step position:
///   reward = -||p' - goal||,
///   obstacle i: 2 exp(-||p' - c_i||) + 0.5 inside the disc, else 0,
///   boundary: 1 when p' leaves the box.
/// After costing, the position is clamped to the box and the velocity
/// component pointing out of a wall it touches is zeroed.
EnvStepResult env_step(const NavConfig& cfg, const NavState& s, const Vec2& a);

/// Action and its log-density under the policy that drew it.
struct ActionDraw {
  Vec2 action{0.0, 0.0};
  double logp = 0.0;
};

using ActionFn = std::function<ActionDraw(const NavState&, Rng&)>;

struct Trajectory {
  /// Pre-step states, one per step.
  std::vector<NavState> states;
  /// Actions as drawn (before clipping).
  std::vector<Vec2> actions;
  std::vector<double> logps;
  std::vector<double> rewards;
  /// horizon x channels
  Matrix costs;

  std::size_t length() const noexcept { return rewards.size(); }
};

NavState sample_start(const NavConfig& cfg, Rng& rng);

/// Exactly cfg.horizon steps from a sampled start at rest. The start is
/// drawn first, then the policy consumes the same stream.
Trajectory rollout(const NavConfig& cfg, const ActionFn& policy, Rng& rng);
Trajectory rollout(const NavConfig& cfg, const ActionFn& policy, std::uint64_t seed);

struct DiscountedTotals {
  double G = 0.0;
  /// Discounted cost minus cap, per channel.
  Vector C;
  /// Discounted cost before subtracting the cap.
  Vector raw_costs;
};

/// G = sum_t gamma^t r_t and C_i = sum_t gamma^t c_{i,t} - cap_i, with
/// gamma^t formed by repeated multiplication.
DiscountedTotals discounted_totals(const Trajectory& traj, double gamma, const Vector& cost_caps);

/// CSV: t,px,py,vx,vy,ax,ay,reward,cost_0..cost_{m-1}
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace safeopt
