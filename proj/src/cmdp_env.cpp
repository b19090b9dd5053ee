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

#include "safeopt/cmdp_env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "safeopt/error.hpp"
#include "safeopt/io.hpp"

namespace safeopt {

namespace {

double distance(const Vec2& a, const Vec2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

void invalid(const std::string& key, const std::string& why) {
  fail(ErrorCode::ConfigInvalid, "nav." + key + ": " + why);
}

}  // namespace

void NavConfig::validate() const {
  for (int d = 0; d < 2; ++d) {
    if (!(bounds_lo[d] < bounds_hi[d])) invalid("bounds", "lower corner must be below the upper corner");
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const Obstacle& o = obstacles[i];
    if (!(o.radius > 0.0)) invalid("obstacles", "radius of obstacle " + std::to_string(i) + " must be positive");
    for (int d = 0; d < 2; ++d) {
      if (o.center[d] - o.radius < bounds_lo[d] || o.center[d] + o.radius > bounds_hi[d])
        invalid("obstacles", "obstacle " + std::to_string(i) + " is not inside the bounds");
    }
  }
  if (!(dt > 0.0)) invalid("dt", "must be positive");
  if (horizon < 1) invalid("horizon", "must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) invalid("gamma", "must lie in (0, 1)");
  if (!(action_limit > 0.0)) invalid("action_limit", "must be positive");
  if (!(start_jitter >= 0.0)) invalid("start_jitter", "must be non-negative");
  if (cost_caps.size() != channels())
    invalid("caps", "expected " + std::to_string(channels()) + " entries (one per obstacle plus boundary)");
  for (double c : cost_caps.values())
    if (!(c >= 0.0)) invalid("caps", "entries must be non-negative");
}

EnvStepResult env_step(const NavConfig& cfg, const NavState& s, const Vec2& a) {
  EnvStepResult out;
  out.costs = Vector(cfg.channels());
  const double dt = cfg.dt;
  Vec2 p{};
  Vec2 v{};
  for (int d = 0; d < 2; ++d) {
    const double acc = std::clamp(a[d], -cfg.action_limit, cfg.action_limit);
    p[d] = s.position[d] + s.velocity[d] * dt + 0.5 * acc * dt * dt;
    v[d] = s.velocity[d] + acc * dt;
  }
  out.reward = -distance(p, cfg.goal);
  for (std::size_t i = 0; i < cfg.obstacles.size(); ++i) {
    const double dist = distance(p, cfg.obstacles[i].center);
    if (dist <= cfg.obstacles[i].radius) out.costs[i] = 2.0 * std::exp(-dist) + 0.5;
  }
  bool outside = false;
  for (int d = 0; d < 2; ++d) {
    if (p[d] < cfg.bounds_lo[d]) {
      outside = true;
      p[d] = cfg.bounds_lo[d];
      v[d] = std::max(v[d], 0.0);
    } else if (p[d] > cfg.bounds_hi[d]) {
      outside = true;
      p[d] = cfg.bounds_hi[d];
      v[d] = std::min(v[d], 0.0);
    }
  }
  out.costs[cfg.obstacles.size()] = outside ? 1.0 : 0.0;
  out.next = {p, v};
  return out;
}

NavState sample_start(const NavConfig& cfg, Rng& rng) {
  NavState s;
  for (int d = 0; d < 2; ++d) s.position[d] = cfg.start[d] + rng.uniform(-cfg.start_jitter, cfg.start_jitter);
  return s;
}

Trajectory rollout(const NavConfig& cfg, const ActionFn& policy, Rng& rng) {
  Trajectory t;
  const std::size_t h = cfg.horizon;
  t.states.reserve(h);
  t.actions.reserve(h);
  t.logps.reserve(h);
  t.rewards.reserve(h);
  t.costs = Matrix(h, cfg.channels());
  NavState s = sample_start(cfg, rng);
  for (std::size_t k = 0; k < h; ++k) {
    const ActionDraw draw = policy(s, rng);
    EnvStepResult step = env_step(cfg, s, draw.action);
    t.states.push_back(s);
    t.actions.push_back(draw.action);
    t.logps.push_back(draw.logp);
    t.rewards.push_back(step.reward);
    for (std::size_t i = 0; i < cfg.channels(); ++i) t.costs(k, i) = step.costs[i];
    s = step.next;
  }
  return t;
}

Trajectory rollout(const NavConfig& cfg, const ActionFn& policy, std::uint64_t seed) {
  Rng rng(seed);
  return rollout(cfg, policy, rng);
}

DiscountedTotals discounted_totals(const Trajectory& traj, double gamma, const Vector& cost_caps) {
  require(cost_caps.size() == traj.costs.cols(), ErrorCode::DimensionMismatch,
          "discounted_totals: caps do not match the cost channels");
  DiscountedTotals out;
  out.raw_costs = Vector(cost_caps.size());
  double discount = 1.0;
  for (std::size_t t = 0; t < traj.length(); ++t) {
    out.G += discount * traj.rewards[t];
    for (std::size_t i = 0; i < cost_caps.size(); ++i) out.raw_costs[i] += discount * traj.costs(t, i);
    discount *= gamma;
  }
  out.C = out.raw_costs - cost_caps;
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,px,py,vx,vy,ax,ay,reward";
  for (std::size_t i = 0; i < traj.costs.cols(); ++i) out << ",cost_" << i;
  out << '\n';
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const NavState& s = traj.states[t];
    out << t << ',' << format_real(s.position[0]) << ',' << format_real(s.position[1]) << ','
        << format_real(s.velocity[0]) << ',' << format_real(s.velocity[1]) << ','
        << format_real(traj.actions[t][0]) << ',' << format_real(traj.actions[t][1]) << ','
        << format_real(traj.rewards[t]);
    for (std::size_t i = 0; i < traj.costs.cols(); ++i) out << ',' << format_real(traj.costs(t, i));
    out << '\n';
  }
}

}  // namespace safeopt
