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

#include "safeopt/ndcore/tape.hpp"

#include <cmath>
#include <string>

#include "safeopt/error.hpp"

namespace safeopt {

namespace {

const Var kNone{};

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  require(v.tape_ == this && v.id_ < nodes_.size(), ErrorCode::InvalidArgument,
          "tape: handle does not belong to this tape");
  return nodes_[v.id_];
}

Var Tape::push(Op op, Var a, Var b, double c, Matrix value) {
  bool needs = op == Op::Parameter;
  if (a.valid()) needs = needs || nodes_[a.id_].needs_grad;
  if (b.valid()) needs = needs || nodes_[b.id_].needs_grad;
  nodes_.push_back(Node{op, a.id_, b.id_, c, needs, std::move(value), Matrix()});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Matrix value) { return push(Op::Parameter, kNone, kNone, 0.0, std::move(value)); }

Var Tape::constant(Matrix value) { return push(Op::Constant, kNone, kNone, 0.0, std::move(value)); }

Var Tape::binary_elementwise(Op op, Var a, Var b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  require(x.same_shape(y), ErrorCode::DimensionMismatch,
          "tape: elementwise shapes " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
              " vs " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
  Matrix out(x.rows(), x.cols());
  const double* px = x.data();
  const double* py = y.data();
  double* po = out.data();
  const std::size_t n = x.size();
  switch (op) {
    case Op::Add: for (std::size_t i = 0; i < n; ++i) po[i] = px[i] + py[i]; break;
    case Op::Sub: for (std::size_t i = 0; i < n; ++i) po[i] = px[i] - py[i]; break;
    case Op::Mul: for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * py[i]; break;
    case Op::Div: for (std::size_t i = 0; i < n; ++i) po[i] = px[i] / py[i]; break;
    default: fail(ErrorCode::InvalidArgument, "tape: not an elementwise binary op");
  }
  return push(op, a, b, 0.0, std::move(out));
}

Var Tape::add(Var a, Var b) { return binary_elementwise(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary_elementwise(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary_elementwise(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary_elementwise(Op::Div, a, b); }

Var Tape::matmul(Var a, Var b) {
  Matrix out = safeopt::matmul(node(a).value, node(b).value);
  return push(Op::MatMul, a, b, 0.0, std::move(out));
}

Var Tape::tanh(Var a) {
  Matrix out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
  return push(Op::Tanh, a, kNone, 0.0, std::move(out));
}

Var Tape::sigmoid(Var a) {
  Matrix out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = out.data()[i];
    out.data()[i] = 1.0 / (1.0 + std::exp(-x));
  }
  return push(Op::Sigmoid, a, kNone, 0.0, std::move(out));
}

Var Tape::exp(Var a) {
  Matrix out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::exp(out.data()[i]);
  return push(Op::Exp, a, kNone, 0.0, std::move(out));
}

Var Tape::log(Var a) {
  Matrix out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(out.data()[i]);
  return push(Op::Log, a, kNone, 0.0, std::move(out));
}

Var Tape::max_const(Var a, double c) {
  Matrix out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(out.data()[i], c);
  return push(Op::MaxConst, a, kNone, c, std::move(out));
}

Var Tape::sum(Var a) {
  double acc = 0.0;
  for (double x : node(a).value.values()) acc += x;
  return push(Op::Sum, a, kNone, 0.0, Matrix(1, 1, acc));
}

Var Tape::scale(Var a, double s) {
  Matrix out = node(a).value;
  out *= s;
  return push(Op::Scale, a, kNone, s, std::move(out));
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  require(m.rows() == 1 && m.cols() == 1, ErrorCode::DimensionMismatch, "tape: node is not scalar");
  return m(0, 0);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  const Node& r = node(root);
  require(r.value.rows() == 1 && r.value.cols() == 1, ErrorCode::InvalidArgument,
          "tape: backward root must be scalar");
  for (Node& n : nodes_) n.grad = Matrix();
  has_gradients_ = true;
  if (r.needs_grad) propagate(root.id_);
  for (Node& n : nodes_) {
    if (n.op == Op::Parameter && n.grad.size() != n.value.size())
      n.grad = Matrix(n.value.rows(), n.value.cols());
  }
}

void Tape::propagate(std::size_t root_id) {
  nodes_[root_id].grad = Matrix(1, 1, 1.0);

  for (std::size_t id = root_id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::Parameter:
      case Op::Constant:
        break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        if (nodes_[n.b].needs_grad) accumulate(n.b, -1.0 * g);
        break;
      case Op::Mul: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& y = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) {
          Matrix ga(g.rows(), g.cols());
          for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] * y.data()[i];
          accumulate(n.a, ga);
        }
        if (nodes_[n.b].needs_grad) {
          Matrix gb(g.rows(), g.cols());
          for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] = g.data()[i] * x.data()[i];
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::Div: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& y = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) {
          Matrix ga(g.rows(), g.cols());
          for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] / y.data()[i];
          accumulate(n.a, ga);
        }
        if (nodes_[n.b].needs_grad) {
          Matrix gb(g.rows(), g.cols());
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double yi = y.data()[i];
            gb.data()[i] = -g.data()[i] * x.data()[i] / (yi * yi);
          }
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::MatMul:
        if (nodes_[n.a].needs_grad) accumulate(n.a, matmul_nt(g, nodes_[n.b].value));
        if (nodes_[n.b].needs_grad) accumulate(n.b, matmul_tn(nodes_[n.a].value, g));
        break;
      case Op::Tanh: {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value.data()[i];
          ga.data()[i] = g.data()[i] * (1.0 - y * y);
        }
        accumulate(n.a, ga);
        break;
      }
      case Op::Sigmoid: {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value.data()[i];
          ga.data()[i] = g.data()[i] * y * (1.0 - y);
        }
        accumulate(n.a, ga);
        break;
      }
      case Op::Exp: {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] * n.value.data()[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::Log: {
        const Matrix& x = nodes_[n.a].value;
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] / x.data()[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::MaxConst: {
        const Matrix& x = nodes_[n.a].value;
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] = x.data()[i] > n.c ? g.data()[i] : 0.0;
        accumulate(n.a, ga);
        break;
      }
      case Op::Sum: {
        const Matrix& x = nodes_[n.a].value;
        accumulate(n.a, Matrix(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case Op::Scale:
        accumulate(n.a, n.c * g);
        break;
    }
    // Interior gradients are never queried; release them as we go.
    if (n.op != Op::Parameter) n.grad = Matrix();
  }
}

const Matrix& Tape::grad(Var parameter) const {
  require(parameter.tape_ == this && parameter.id_ < nodes_.size() &&
              nodes_[parameter.id_].op == Op::Parameter,
          ErrorCode::UnrecordedLeaf, "tape: queried handle is not a parameter of this tape");
  require(has_gradients_, ErrorCode::UnrecordedLeaf, "tape: backward() has not been run");
  return nodes_[parameter.id_].grad;
}

Vector Tape::gradient(std::span<const Var> parameters) const {
  std::size_t total = 0;
  for (Var p : parameters) total += node(p).value.size();
  Vector out(total);
  std::size_t offset = 0;
  for (Var p : parameters) {
    const Matrix& g = grad(p);
    const std::size_t count = nodes_[p.id_].value.size();
    if (g.size() == count) {
      for (std::size_t i = 0; i < count; ++i) out[offset + i] = g.data()[i];
    }
    offset += count;
  }
  return out;
}

}  // namespace safeopt
