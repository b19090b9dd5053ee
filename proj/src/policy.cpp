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

#include "safeopt/policy.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "safeopt/error.hpp"
#include "safeopt/io.hpp"
#include "safeopt/ndcore/tape.hpp"

namespace safeopt {

namespace {

constexpr const char* kCheckpointMagic = "safeopt-gaussian-policy";
constexpr int kCheckpointVersion = 1;
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

template <typename F>
void for_each(F&& f, Matrix& a, Matrix& b, Matrix& c, Matrix& d, Matrix& e) {
  f(a);
  f(b);
  f(c);
  f(d);
  f(e);
}

}  // namespace

GaussianMlpPolicy::GaussianMlpPolicy(PolicyConfig cfg)
    : cfg_(cfg),
      w1_(kObsDim, cfg.hidden),
      b1_(1, cfg.hidden),
      w2_(cfg.hidden, kActDim),
      b2_(1, kActDim),
      log_std_(1, kActDim, cfg.init_log_std) {
  require(cfg.hidden > 0, ErrorCode::InvalidArgument, "policy: hidden size must be positive");
  require(std::isfinite(cfg.init_log_std) && std::isfinite(cfg.log_std_floor), ErrorCode::InvalidArgument,
          "policy: log-std settings must be finite");
}

GaussianMlpPolicy GaussianMlpPolicy::initial(PolicyConfig cfg, Rng& rng, double weight_std) {
  GaussianMlpPolicy pol(cfg);
  auto fill = [&](Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, weight_std);
  };
  fill(pol.w1_);
  fill(pol.b1_);
  fill(pol.w2_);
  fill(pol.b2_);
  return pol;
}

std::size_t GaussianMlpPolicy::parameter_count() const noexcept {
  return w1_.size() + b1_.size() + w2_.size() + b2_.size() + log_std_.size();
}

Vector GaussianMlpPolicy::flat() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const Matrix* m : {&w1_, &b1_, &w2_, &b2_, &log_std_})
    out.insert(out.end(), m->values().begin(), m->values().end());
  return Vector(std::move(out));
}

void GaussianMlpPolicy::set_flat(const Vector& values) {
  require(values.size() == parameter_count(), ErrorCode::DimensionMismatch,
          "policy: expected " + std::to_string(parameter_count()) + " parameters, got " +
              std::to_string(values.size()));
  require(values.all_finite(), ErrorCode::NonFiniteInput, "policy: non-finite parameter");
  std::size_t k = 0;
  for_each(
      [&](Matrix& m) {
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = values[k++];
      },
      w1_, b1_, w2_, b2_, log_std_);
}

Vec2 GaussianMlpPolicy::mean(const NavState& s) const {
  const Matrix obs(1, kObsDim, {s.position[0], s.position[1], s.velocity[0], s.velocity[1]});
  Matrix h = matmul(obs, w1_) + b1_;
  for (std::size_t j = 0; j < h.size(); ++j) h.data()[j] = std::tanh(h.data()[j]);
  const Matrix mu = matmul(h, w2_) + b2_;
  return {mu(0, 0), mu(0, 1)};
}

Vec2 GaussianMlpPolicy::stddev() const {
  return {std::exp(std::max(log_std_(0, 0), cfg_.log_std_floor)),
          std::exp(std::max(log_std_(0, 1), cfg_.log_std_floor))};
}

double gaussian_log_density(const Vec2& a, const Vec2& mean, const Vec2& stddev) {
  double out = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double z = (a[d] - mean[d]) / stddev[d];
    out += -0.5 * z * z - std::log(stddev[d]) - 0.5 * kLogTwoPi;
  }
  return out;
}

ActionDraw GaussianMlpPolicy::sample_action(const NavState& s, Rng& rng) const {
  const Vec2 mu = mean(s);
  const Vec2 sd = stddev();
  ActionDraw out;
  for (int d = 0; d < 2; ++d) out.action[d] = mu[d] + sd[d] * rng.normal();
  out.logp = gaussian_log_density(out.action, mu, sd);
  return out;
}

double GaussianMlpPolicy::log_prob(const NavState& s, const Vec2& a) const {
  return gaussian_log_density(a, mean(s), stddev());
}

ActionFn GaussianMlpPolicy::action_fn() const {
  return [this](const NavState& s, Rng& rng) { return sample_action(s, rng); };
}

GaussianMlpPolicy::TrajectoryScore GaussianMlpPolicy::score(const std::vector<NavState>& states,
                                                            const std::vector<Vec2>& actions) const {
  require(states.size() == actions.size(), ErrorCode::DimensionMismatch,
          "policy score: states and actions differ in length");
  const std::size_t t = states.size();
  TrajectoryScore out;
  if (t == 0) {
    out.grad = Vector(parameter_count());
    return out;
  }
  Matrix obs(t, kObsDim);
  Matrix act(t, kActDim);
  for (std::size_t k = 0; k < t; ++k) {
    obs(k, 0) = states[k].position[0];
    obs(k, 1) = states[k].position[1];
    obs(k, 2) = states[k].velocity[0];
    obs(k, 3) = states[k].velocity[1];
    act(k, 0) = actions[k][0];
    act(k, 1) = actions[k][1];
  }
  Tape tape;
  const Var w1 = tape.parameter(w1_);
  const Var b1 = tape.parameter(b1_);
  const Var w2 = tape.parameter(w2_);
  const Var b2 = tape.parameter(b2_);
  const Var ls = tape.parameter(log_std_);
  const Var ones = tape.constant(Matrix(t, 1, 1.0));
  const Var s = tape.constant(std::move(obs));
  const Var a = tape.constant(std::move(act));

  const Var h = tape.tanh(tape.add(tape.matmul(s, w1), tape.matmul(ones, b1)));
  const Var mu = tape.add(tape.matmul(h, w2), tape.matmul(ones, b2));
  const Var log_sd = tape.matmul(ones, tape.max_const(ls, cfg_.log_std_floor));
  const Var z = tape.div(tape.sub(a, mu), tape.exp(log_sd));
  const Var quad = tape.scale(tape.sum(tape.mul(z, z)), -0.5);
  const Var logp = tape.sub(quad, tape.sum(log_sd));
  tape.backward(logp);

  out.logp = tape.scalar(logp) - 0.5 * kLogTwoPi * static_cast<double>(t * kActDim);
  const Var params[] = {w1, b1, w2, b2, ls};
  out.grad = tape.gradient(params);
  return out;
}

void GaussianMlpPolicy::save(std::ostream& out) const {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "hidden " << cfg_.hidden << '\n';
  out << "init_log_std " << format_real(cfg_.init_log_std) << '\n';
  out << "log_std_floor " << format_real(cfg_.log_std_floor) << '\n';
  const Vector values = flat();
  out << "count " << values.size() << '\n';
  for (double v : values.values()) out << format_real(v) << '\n';
  require(out.good(), ErrorCode::IoFailure, "policy checkpoint: write failed");
}

GaussianMlpPolicy GaussianMlpPolicy::load(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  require(in.good() && magic == kCheckpointMagic, ErrorCode::SchemaMismatch,
          "policy checkpoint: not a policy checkpoint");
  require(version == kCheckpointVersion, ErrorCode::SchemaMismatch,
          "policy checkpoint: unsupported version " + std::to_string(version));
  auto field = [&](const char* name) {
    std::string key, value;
    in >> key >> value;
    require(in.good() && key == name, ErrorCode::SchemaMismatch,
            std::string("policy checkpoint: expected field '") + name + "'");
    return value;
  };
  PolicyConfig cfg;
  cfg.hidden = std::stoul(field("hidden"));
  cfg.init_log_std = parse_real(field("init_log_std"));
  cfg.log_std_floor = parse_real(field("log_std_floor"));
  const std::size_t count = std::stoul(field("count"));
  GaussianMlpPolicy pol(cfg);
  require(count == pol.parameter_count(), ErrorCode::SchemaMismatch,
          "policy checkpoint: parameter count does not match the stored shape");
  std::vector<double> values(count);
  std::string token;
  for (std::size_t i = 0; i < count; ++i) {
    in >> token;
    require(!in.fail(), ErrorCode::IoFailure, "policy checkpoint: truncated parameter list");
    values[i] = parse_real(token);
  }
  pol.set_flat(Vector(std::move(values)));
  return pol;
}

void GaussianMlpPolicy::save_file(const std::string& path) const {
  std::ofstream out(path);
  require(out.is_open(), ErrorCode::IoFailure, "policy checkpoint: cannot open '" + path + "' for writing");
  save(out);
}

GaussianMlpPolicy GaussianMlpPolicy::load_file(const std::string& path) {
  std::ifstream in(path);
  require(in.is_open(), ErrorCode::IoFailure, "policy checkpoint: cannot open '" + path + "'");
  return load(in);
}

PolicyGradientEstimate score_function_estimate(const std::vector<ScoredSample>& samples,
                                               const Vector& cost_caps, bool constant_baseline) {
  require(!samples.empty(), ErrorCode::EmptyBatch, "estimate: batch is empty");
  const std::size_t n = samples.front().score.size();
  const std::size_t m = cost_caps.size();
  for (const ScoredSample& s : samples) {
    require(s.score.size() == n && s.costs.size() == m, ErrorCode::DimensionMismatch,
            "estimate: samples disagree in parameter or channel count");
  }
  const std::size_t count = samples.size();
  const double inv = 1.0 / static_cast<double>(count);

  double sum_g = 0.0;
  Vector sum_c(m);
  for (const ScoredSample& s : samples) {
    sum_g += s.G;
    sum_c += s.costs;
  }

  PolicyGradientEstimate out;
  out.J = sum_g * inv;
  out.C = inv * sum_c - cost_caps;
  out.gradJ = Vector(n);
  out.gradC = Matrix(m, n);
  const bool offset = constant_baseline && count > 1;
  const double loo = offset ? 1.0 / static_cast<double>(count - 1) : 0.0;
  for (const ScoredSample& s : samples) {
    const double g = offset ? s.G - (sum_g - s.G) * loo : s.G;
    axpy(g, s.score, out.gradJ);
    for (std::size_t i = 0; i < m; ++i) {
      const double c = offset ? s.costs[i] - (sum_c[i] - s.costs[i]) * loo : s.costs[i];
      auto row = out.gradC.row_span(i);
      for (std::size_t j = 0; j < n; ++j) row[j] += c * s.score[j];
    }
  }
  out.gradJ *= inv;
  out.gradC *= inv;
  return out;
}

PolicyGradientEstimate estimate_grads(const GaussianMlpPolicy& pol, const std::vector<Trajectory>& batch,
                                      double gamma, const Vector& cost_caps, bool constant_baseline) {
  require(!batch.empty(), ErrorCode::EmptyBatch, "estimate_grads: batch is empty");
  std::vector<ScoredSample> samples;
  samples.reserve(batch.size());
  for (const Trajectory& traj : batch) {
    const DiscountedTotals totals = discounted_totals(traj, gamma, cost_caps);
    samples.push_back({pol.score(traj.states, traj.actions).grad, totals.G, totals.raw_costs});
  }
  return score_function_estimate(samples, cost_caps, constant_baseline);
}

}  // namespace safeopt
