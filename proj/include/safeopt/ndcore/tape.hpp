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
#include <span>
#include <vector>

#include "safeopt/ndcore/matrix.hpp"

namespace safeopt {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(const Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  const Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation over matrix-valued nodes.
///
/// Nodes are appended in evaluation order, so the node list is already
/// topologically sorted; backward() walks it once from the root down.
/// Elementwise ops require equal shapes (no broadcasting). A bias row is
/// broadcast by multiplying a ones column into it with matmul.
///
/// Single-threaded per instance.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is tracked.
  Var parameter(Matrix value);
  /// Leaf treated as a constant.
  Var constant(Matrix value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  /// Elementwise max(a, c); the partial is 1 where a > c and 0 elsewhere.
  Var max_const(Var a, double c);
  /// Sum of all entries, as a 1x1 node.
  Var sum(Var a);
  Var scale(Var a, double s);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;

  /// Accumulates d(root)/d(node) for every node that depends on a parameter.
  /// The root must be 1x1. Gradients from an earlier call are discarded.
  void backward(Var root);

  /// Gradient of the last backward() root with respect to a parameter leaf.
  /// Throws UnrecordedLeaf for handles that are not parameters of this tape
  /// and for any query made before backward().
  const Matrix& grad(Var parameter) const;
  /// Concatenated row-major gradients of the given parameters.
  Vector gradient(std::span<const Var> parameters) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Parameter, Constant, Add, Sub, Mul, Div, MatMul, Tanh, Sigmoid, Exp, Log, MaxConst, Sum, Scale
  };

  struct Node {
    Op op;
    std::size_t a;
    std::size_t b;
    double c;
    bool needs_grad;
    Matrix value;
    Matrix grad;
  };

  const Node& node(Var v) const;
  Var push(Op op, Var a, Var b, double c, Matrix value);
  Var binary_elementwise(Op op, Var a, Var b);
  void accumulate(std::size_t id, const Matrix& g);
  void propagate(std::size_t root_id);

  std::vector<Node> nodes_;
  bool has_gradients_ = false;
};

}  // namespace safeopt
