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

#include "safeopt/baselines.hpp"

#include <cmath>
#include <string>

#include "safeopt/constraint_dynamics.hpp"
#include "safeopt/error.hpp"

namespace safeopt {

std::string_view rule_name(BaselineRule rule) noexcept {
  switch (rule) {
    case BaselineRule::Plain: return "plain";
    case BaselineRule::Adam: return "adam";
    case BaselineRule::RmsProp: return "rmsprop";
  }
  return "unknown";
}

BaselineRule parse_rule(std::string_view name) {
  if (name == "plain") return BaselineRule::Plain;
  if (name == "adam") return BaselineRule::Adam;
  if (name == "rmsprop") return BaselineRule::RmsProp;
  fail(ErrorCode::InvalidArgument, "unknown optimizer rule '" + std::string(name) + "'");
}

AdaptiveState AdaptiveState::make(BaselineRule rule, std::size_t n, AdaptiveCoefficients coef) {
  AdaptiveState s;
  s.rule = rule;
  s.coef = coef;
  s.m = Vector(n);
  s.v = Vector(n);
  return s;
}

Vector baseline_step(AdaptiveState& state, const Vector& theta, const Vector& grad, double lr) {
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::InvalidArgument, "baseline_step: lr must be positive");
  require(theta.size() == grad.size() && state.m.size() == theta.size() && state.v.size() == theta.size(),
          ErrorCode::DimensionMismatch, "baseline_step: size mismatch");
  require(theta.all_finite(), ErrorCode::NonFiniteInput, "baseline_step: non-finite parameters");
  require(grad.all_finite(), ErrorCode::NonFiniteInput, "baseline_step: non-finite gradient");

  const AdaptiveCoefficients& c = state.coef;
  ++state.step;
  Vector out = theta;
  switch (state.rule) {
    case BaselineRule::Plain:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = theta[i] - lr * grad[i];
      break;
    case BaselineRule::Adam: {
      state.beta1_pow *= c.beta1;
      state.beta2_pow *= c.beta2;
      const double bc1 = 1.0 - state.beta1_pow;
      const double bc2 = 1.0 - state.beta2_pow;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double g = grad[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * (g * g);
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        out[i] = theta[i] - lr * (m_hat / (std::sqrt(v_hat) + c.eps));
      }
      break;
    }
    case BaselineRule::RmsProp:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double g = grad[i];
        state.v[i] = c.rms_decay * state.v[i] + (1.0 - c.rms_decay) * (g * g);
        out[i] = theta[i] - lr * (g / (std::sqrt(state.v[i]) + c.rms_eps));
      }
      break;
  }
  return out;
}

Vector projected_pg_step(const Vector& theta, const Vector& grad, const Polytope& poly,
                         const ProjectionMetric& metric, double beta) {
  require(grad.all_finite(), ErrorCode::NonFiniteInput, "projected_pg_step: non-finite gradient");
  return safe_update(theta, grad, poly, metric, beta).theta_next;
}

}  // namespace safeopt
