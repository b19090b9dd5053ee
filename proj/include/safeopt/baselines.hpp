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

#include <cstdint>
#include <string_view>

#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/projection.hpp"

namespace safeopt {

enum class BaselineRule { Plain, Adam, RmsProp };

std::string_view rule_name(BaselineRule rule) noexcept;
/// Parses "plain", "adam" or "rmsprop"; throws InvalidArgument otherwise.
BaselineRule parse_rule(std::string_view name);

struct AdaptiveCoefficients {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double rms_decay = 0.99;
  double rms_eps = 1e-8;
};

/// Moment buffers and step counter for one parameter vector.
struct AdaptiveState {
  BaselineRule rule = BaselineRule::Plain;
  AdaptiveCoefficients coef;
  Vector m;
  Vector v;
  std::uint64_t step = 0;
  // Running beta1^t and beta2^t, kept as products so replays are exact.
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  static AdaptiveState make(BaselineRule rule, std::size_t n, AdaptiveCoefficients coef = {});
};

/// One descent step theta - lr * update(grad). Pass -grad to ascend.
///
///   plain:   update = g
///   adam:    m = b1 m + (1-b1) g, v = b2 v + (1-b2) g^2,
///            update = (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
///   rmsprop: v = rho v + (1-rho) g^2, update = g / (sqrt(v) + eps)
///
/// Throws NonFiniteInput for non-finite theta or grad, InvalidArgument for
/// lr <= 0 and DimensionMismatch when sizes disagree.
Vector baseline_step(AdaptiveState& state, const Vector& theta, const Vector& grad, double lr);

/// Naive projected step theta + beta * project(grad): the raw gradient is
/// projected once onto the update polytope.
Vector projected_pg_step(const Vector& theta, const Vector& grad, const Polytope& poly,
                         const ProjectionMetric& metric, double beta);

}  // namespace safeopt
