#pragma once

#include <cmath>
#include <limits>

#include "safeopt/meta_opt.hpp"

namespace safeopt::testing {

/// Maximize -||theta - target||^2 subject to ||theta - center||^2 - r^2 <= 0.
class BallQuadratic final : public InnerProblem {
 public:
  BallQuadratic(Vector target, Vector center, double radius)
      : target_(std::move(target)), center_(std::move(center)), radius_(radius) {}

  std::size_t dim() const override { return target_.size(); }

  InnerEval evaluate(const Vector& theta) override {
    ++evaluations;
    const Vector d = theta - target_;
    const Vector e = theta - center_;
    InnerEval out;
    out.objective = -dot(d, d);
    out.objective_grad = -2.0 * d;
    out.constraints.values = Vector{dot(e, e) - radius_ * radius_};
    out.constraints.gradients = Matrix::row(2.0 * e);
    return out;
  }

  double objective(const Vector& theta) const {
    const Vector d = theta - target_;
    return -dot(d, d);
  }

  int evaluations = 0;

 private:
  Vector target_;
  Vector center_;
  double radius_;
};

/// Constant objective, no constraints.
class ConstantProblem final : public InnerProblem {
 public:
  ConstantProblem(std::size_t n, double value) : n_(n), value_(value) {}
  std::size_t dim() const override { return n_; }
  InnerEval evaluate(const Vector&) override {
    return {value_, Vector(n_), ConstraintEval{Vector(), Matrix(0, n_)}};
  }

 private:
  std::size_t n_;
  double value_;
};

/// Objective turns NaN after `good` evaluations.
class DivergingProblem final : public InnerProblem {
 public:
  DivergingProblem(std::size_t n, int good) : n_(n), good_(good) {}
  std::size_t dim() const override { return n_; }
  InnerEval evaluate(const Vector& theta) override {
    const double j = calls_++ < good_ ? -dot(theta, theta) : std::numeric_limits<double>::quiet_NaN();
    return {j, -2.0 * theta, ConstraintEval{Vector(), Matrix(0, n_)}};
  }

 private:
  std::size_t n_;
  int good_;
  int calls_ = 0;
};

}  // namespace safeopt::testing
