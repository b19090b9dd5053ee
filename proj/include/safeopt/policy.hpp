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
#include <iosfwd>
#include <string>
#include <vector>

#include "safeopt/cmdp_env.hpp"
#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/ndcore/rng.hpp"

namespace safeopt {

struct PolicyConfig {
  std::size_t hidden = 16;
  double init_log_std = -0.69314718055994531;  // ln 0.5
  /// log-std is clamped from below at this value in every density evaluation.
  double log_std_floor = -5.0;
};

/// Diagonal Gaussian over 2D actions. The mean is a one-hidden-layer tanh MLP
/// of (px, py, vx, vy); the log-std is a free 2-vector.
///
/// Flat parameter order: w1 (4 x hidden), b1, w2 (hidden x 2), b2, log_std.
class GaussianMlpPolicy {
 public:
  static constexpr std::size_t kObsDim = 4;
  static constexpr std::size_t kActDim = 2;

  /// Zero weights, log-std at cfg.init_log_std.
  explicit GaussianMlpPolicy(PolicyConfig cfg = {});
  /// Weights and biases ~ N(0, weight_std^2); log-std at cfg.init_log_std.
  static GaussianMlpPolicy initial(PolicyConfig cfg, Rng& rng, double weight_std = 0.1);

  const PolicyConfig& config() const noexcept { return cfg_; }
  std::size_t parameter_count() const noexcept;
  Vector flat() const;
  void set_flat(const Vector& values);

  Vec2 mean(const NavState& s) const;
  /// exp(max(log_std, floor)).
  Vec2 stddev() const;

  ActionDraw sample_action(const NavState& s, Rng& rng) const;
  double log_prob(const NavState& s, const Vec2& a) const;
  ActionFn action_fn() const;

  /// Sum over steps of log pi(a_t | s_t) and its gradient in flat order.
  struct TrajectoryScore {
    double logp = 0.0;
    Vector grad;
  };
  TrajectoryScore score(const std::vector<NavState>& states, const std::vector<Vec2>& actions) const;

  void save(std::ostream& out) const;
  static GaussianMlpPolicy load(std::istream& in);
  void save_file(const std::string& path) const;
  static GaussianMlpPolicy load_file(const std::string& path);

 private:
  PolicyConfig cfg_;
  Matrix w1_;
  Matrix b1_;
  Matrix w2_;
  Matrix b2_;
  Matrix log_std_;  // 1 x 2
};

/// Diagonal Gaussian log-density.
double gaussian_log_density(const Vec2& a, const Vec2& mean, const Vec2& stddev);

/// One trajectory reduced to what the estimator needs.
struct ScoredSample {
  /// grad_theta log pi_theta(tau)
  Vector score;
  double G = 0.0;
  /// Discounted cost per channel, before subtracting caps.
  Vector costs;
};

struct PolicyGradientEstimate {
  double J = 0.0;
  Vector gradJ;
  Vector C;
  /// channels x parameters
  Matrix gradC;
};

/// Score-function estimates: gradJ = mean(score * G) and row i of gradC =
/// mean(score * cost_i), with C = mean(cost) - caps. With constant_baseline
/// each sample's G and cost are offset by the mean of the other samples
/// (leave-one-out, so the estimate stays unbiased); batches of one use no
/// offset. Throws EmptyBatch.
PolicyGradientEstimate score_function_estimate(const std::vector<ScoredSample>& samples,
                                               const Vector& cost_caps, bool constant_baseline = false);

PolicyGradientEstimate estimate_grads(const GaussianMlpPolicy& pol, const std::vector<Trajectory>& batch,
                                      double gamma, const Vector& cost_caps, bool constant_baseline = false);

}  // namespace safeopt
