/*
 * Copyright (c) 2026 The gradguide authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gradguide/autodiff.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <sstream>

#include "gradguide/error.hpp"

namespace gradguide::autodiff {
namespace {

std::atomic<int> g_faulty_op{-1};

constexpr std::array kDifferentiableOps = {
    OpKind::add,     OpKind::sub,
    OpKind::mul,     OpKind::div,
    OpKind::scalar_mul, OpKind::matmul,
    OpKind::relu,    OpKind::tanh,
    OpKind::exp,     OpKind::log,
    OpKind::sum,     OpKind::mean,
    OpKind::l2_norm, OpKind::dot,
    OpKind::softmax_cross_entropy, OpKind::concat,
    OpKind::slice,
};

constexpr std::array<std::string_view, 18> kOpNames = {
    "leaf", "add",  "sub", "mul", "div",     "scalar_mul",
    "matmul", "relu", "tanh", "exp", "log",  "sum",
    "mean", "l2_norm", "dot", "softmax_cross_entropy", "concat", "slice",
};

[[noreturn]] void shape_error(OpKind kind, std::span<const Tensor> inputs,
                              const std::string& detail) {
  std::ostringstream os;
  os << op_name(kind) << ": " << detail << " (shapes";
  for (const auto& t : inputs) os << ' ' << to_string(t.shape());
  os << ')';
  throw ShapeError(os.str());
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() >= full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

// Output shape of a broadcasting elementwise op, or throws.
Shape broadcast_shape(OpKind kind, std::span<const Tensor> in) {
  const Shape& a = in[0].shape();
  const Shape& b = in[1].shape();
  if (a == b) return a;
  if (in[1].numel() == 1) return a;
  if (in[0].numel() == 1) return b;
  if (is_suffix(a, b)) return a;
  shape_error(kind, in, "operands are not broadcast-compatible");
}

// Index into an operand broadcast to an output of `out_n` elements.
inline double at_broadcast(std::span<const double> v, std::size_t i) {
  return v.size() == 1 ? v[0] : v[i % v.size()];
}

struct Result {
  Shape shape;
  std::vector<double> values;
};

template <typename F>
Result elementwise(OpKind kind, std::span<const Tensor> in, F f) {
  Shape shape = broadcast_shape(kind, in);
  const std::size_t n = numel(shape);
  const auto a = in[0].values();
  const auto b = in[1].values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(at_broadcast(a, i), at_broadcast(b, i));
  }
  return {std::move(shape), std::move(out)};
}

template <typename F>
Result unary(std::span<const Tensor> in, F f) {
  const auto a = in[0].values();
  std::vector<double> out(a.size());
  std::transform(a.begin(), a.end(), out.begin(), f);
  return {in[0].shape(), std::move(out)};
}

void expect_arity(OpKind kind, std::span<const Tensor> in, std::size_t n) {
  if (in.size() != n) {
    shape_error(kind, in,
                "expected " + std::to_string(n) + " operands, got " +
                    std::to_string(in.size()));
  }
}

Result compute(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::leaf:
      expect_arity(kind, in, 1);
      return {in[0].shape(), {in[0].values().begin(), in[0].values().end()}};
    case OpKind::add:
      expect_arity(kind, in, 2);
      return elementwise(kind, in, [](double x, double y) { return x + y; });
    case OpKind::sub:
      expect_arity(kind, in, 2);
      return elementwise(kind, in, [](double x, double y) { return x - y; });
    case OpKind::mul:
      expect_arity(kind, in, 2);
      return elementwise(kind, in, [](double x, double y) { return x * y; });
    case OpKind::div: {
      expect_arity(kind, in, 2);
      for (double y : in[1].values()) {
        if (y == 0.0) throw DomainError("div: division by zero");
      }
      return elementwise(kind, in, [](double x, double y) { return x / y; });
    }
    case OpKind::scalar_mul: {
      expect_arity(kind, in, 1);
      const double c = attrs.scalar;
      return unary(in, [c](double x) { return x * c; });
    }
    case OpKind::matmul: {
      expect_arity(kind, in, 2);
      const Shape& sa = in[0].shape();
      const Shape& sb = in[1].shape();
      if (sa.size() != 2 || sb.size() != 2) {
        shape_error(kind, in, "operands must be rank 2");
      }
      const std::size_t m = attrs.transpose_a ? sa[1] : sa[0];
      const std::size_t k = attrs.transpose_a ? sa[0] : sa[1];
      const std::size_t kb = attrs.transpose_b ? sb[1] : sb[0];
      const std::size_t n = attrs.transpose_b ? sb[0] : sb[1];
      if (k != kb) shape_error(kind, in, "inner dimensions differ");
      const auto a = in[0].values();
      const auto b = in[1].values();
      std::vector<double> out(m * n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = attrs.transpose_a ? a[p * m + i] : a[i * k + p];
          for (std::size_t j = 0; j < n; ++j) {
            const double bv = attrs.transpose_b ? b[j * k + p] : b[p * n + j];
            out[i * n + j] += av * bv;
          }
        }
      }
      return {{m, n}, std::move(out)};
    }
    case OpKind::relu:
      expect_arity(kind, in, 1);
      return unary(in, [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::tanh:
      expect_arity(kind, in, 1);
      return unary(in, [](double x) { return std::tanh(x); });
    case OpKind::exp:
      expect_arity(kind, in, 1);
      return unary(in, [](double x) { return std::exp(x); });
    case OpKind::log: {
      expect_arity(kind, in, 1);
      for (double x : in[0].values()) {
        if (!(x > 0.0)) throw DomainError("log: argument must be positive");
      }
      return unary(in, [](double x) { return std::log(x); });
    }
    case OpKind::sum:
    case OpKind::mean: {
      expect_arity(kind, in, 1);
      double s = 0.0;
      for (double x : in[0].values()) s += x;
      if (kind == OpKind::mean) s /= static_cast<double>(in[0].numel());
      return {{1}, {s}};
    }
    case OpKind::l2_norm: {
      expect_arity(kind, in, 1);
      double s = 0.0;
      for (double x : in[0].values()) s += x * x;
      return {{1}, {std::sqrt(s)}};
    }
    case OpKind::dot: {
      expect_arity(kind, in, 2);
      if (in[0].numel() != in[1].numel()) {
        shape_error(kind, in, "operands differ in size");
      }
      const auto a = in[0].values();
      const auto b = in[1].values();
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return {{1}, {s}};
    }
    case OpKind::softmax_cross_entropy: {
      expect_arity(kind, in, 1);
      const Shape& s = in[0].shape();
      if (s.size() != 2) shape_error(kind, in, "logits must be rank 2");
      if (!attrs.labels || attrs.labels->size() != s[0]) {
        shape_error(kind, in, "need one label per logit row");
      }
      const std::size_t rows = s[0];
      const std::size_t cols = s[1];
      const auto z = in[0].values();
      double total = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const int y = (*attrs.labels)[r];
        if (y < 0 || static_cast<std::size_t>(y) >= cols) {
          throw InvalidArgument("softmax_cross_entropy: label " +
                                std::to_string(y) + " out of range");
        }
        const double* row = z.data() + r * cols;
        const double mx = *std::max_element(row, row + cols);
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += std::exp(row[c] - mx);
        total += std::log(acc) + mx - row[y];
      }
      return {{1}, {total / static_cast<double>(rows)}};
    }
    case OpKind::concat: {
      if (in.empty()) throw ShapeError("concat: no operands");
      std::vector<double> out;
      for (const auto& t : in) {
        out.insert(out.end(), t.values().begin(), t.values().end());
      }
      const std::size_t n = out.size();
      return {{n}, std::move(out)};
    }
    case OpKind::slice: {
      expect_arity(kind, in, 1);
      const std::size_t n = numel(attrs.shape);
      if (n == 0 || attrs.offset + n > in[0].numel()) {
        shape_error(kind, in,
                    "range [" + std::to_string(attrs.offset) + ", " +
                        std::to_string(attrs.offset + n) + ") with shape " +
                        to_string(attrs.shape) + " out of bounds");
      }
      const auto a = in[0].values();
      return {attrs.shape, {a.begin() + attrs.offset,
                            a.begin() + attrs.offset + n}};
    }
  }
  throw InvalidArgument("unknown op kind");
}

// ---------------------------------------------------------------------------
// Backward rules. Each returns one gradient per input (nullopt for inputs
// that are constants). All arithmetic goes through recorded ops so that the
// result is itself differentiable when the inputs are tape-bound.

// Sums a broadcast gradient back down to `target`.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  const std::size_t n = numel(target);
  if (n == 1) return reshape(sum(g), target);
  const std::size_t lead = g.numel() / n;
  const Tensor ones = Tensor::ones({1, lead});
  return reshape(matmul(ones, reshape(g, {lead, n})), target);
}

using Grads = std::vector<std::optional<Tensor>>;

Grads backward_rule(const OpRecord& rec, const Tensor& g, bool create_graph) {
  auto input = [&](std::size_t i) {
    return create_graph ? rec.inputs[i] : rec.inputs[i].detach();
  };
  auto needs = [&](std::size_t i) { return rec.inputs[i].on_tape(); };
  const Tensor out = create_graph ? rec.output : rec.output.detach();
  Grads grads(rec.inputs.size());

  switch (rec.kind) {
    case OpKind::leaf:
      break;
    case OpKind::add:
      if (needs(0)) grads[0] = reduce_to(g, rec.inputs[0].shape());
      if (needs(1)) grads[1] = reduce_to(g, rec.inputs[1].shape());
      break;
    case OpKind::sub:
      if (needs(0)) grads[0] = reduce_to(g, rec.inputs[0].shape());
      if (needs(1)) grads[1] = reduce_to(scale(g, -1.0), rec.inputs[1].shape());
      break;
    case OpKind::mul:
      if (needs(0)) grads[0] = reduce_to(mul(g, input(1)), rec.inputs[0].shape());
      if (needs(1)) grads[1] = reduce_to(mul(g, input(0)), rec.inputs[1].shape());
      break;
    case OpKind::div:
      if (needs(0)) grads[0] = reduce_to(div(g, input(1)), rec.inputs[0].shape());
      if (needs(1)) {
        grads[1] = reduce_to(scale(div(mul(g, out), input(1)), -1.0),
                             rec.inputs[1].shape());
      }
      break;
    case OpKind::scalar_mul:
      grads[0] = scale(g, rec.attrs.scalar);
      break;
    case OpKind::matmul: {
      const bool ta = rec.attrs.transpose_a;
      const bool tb = rec.attrs.transpose_b;
      if (needs(0)) {
        grads[0] = ta ? matmul(input(1), g, tb, true)
                      : matmul(g, input(1), false, !tb);
      }
      if (needs(1)) {
        grads[1] = tb ? matmul(g, input(0), true, ta)
                      : matmul(input(0), g, !ta, false);
      }
      break;
    }
    case OpKind::relu: {
      const auto a = rec.inputs[0].values();
      std::vector<double> mask(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) mask[i] = a[i] > 0.0 ? 1.0 : 0.0;
      grads[0] = mul(g, Tensor(rec.inputs[0].shape(), std::move(mask)));
      break;
    }
    case OpKind::tanh:
      grads[0] = sub(g, mul(g, mul(out, out)));
      break;
    case OpKind::exp:
      grads[0] = mul(g, out);
      break;
    case OpKind::log:
      grads[0] = div(g, input(0));
      break;
    case OpKind::sum:
      grads[0] = mul(Tensor::ones(rec.inputs[0].shape()), g);
      break;
    case OpKind::mean:
      grads[0] = scale(mul(Tensor::ones(rec.inputs[0].shape()), g),
                       1.0 / static_cast<double>(rec.inputs[0].numel()));
      break;
    case OpKind::l2_norm:
      grads[0] = mul(input(0), div(g, out));
      break;
    case OpKind::dot:
      if (needs(0)) grads[0] = mul(reshape(input(1), rec.inputs[0].shape()), g);
      if (needs(1)) grads[1] = mul(reshape(input(0), rec.inputs[1].shape()), g);
      break;
    case OpKind::softmax_cross_entropy: {
      // (softmax(z) - onehot(y)) / rows, with softmax assembled from
      // exp/matmul/div so that it can be differentiated again. The row max
      // is a constant shift; softmax is invariant to it.
      const Tensor z = input(0);
      const std::size_t rows = z.shape()[0];
      const std::size_t cols = z.shape()[1];
      std::vector<double> shift(rows * cols);
      std::vector<double> onehot(rows * cols, 0.0);
      const auto zv = z.values();
      for (std::size_t r = 0; r < rows; ++r) {
        const double mx = *std::max_element(zv.begin() + r * cols,
                                            zv.begin() + (r + 1) * cols);
        std::fill_n(shift.begin() + r * cols, cols, mx);
        onehot[r * cols + (*rec.attrs.labels)[r]] = 1.0;
      }
      const Tensor e = exp(sub(z, Tensor(z.shape(), std::move(shift))));
      const Tensor row_sums = matmul(e, Tensor::ones({cols, cols}));
      const Tensor p = div(e, row_sums);
      grads[0] = mul(sub(p, Tensor(z.shape(), std::move(onehot))),
                     scale(g, 1.0 / static_cast<double>(rows)));
      break;
    }
    case OpKind::concat: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
        const Tensor& part = rec.inputs[i];
        if (needs(i)) grads[i] = slice(g, offset, part.shape());
        offset += part.numel();
      }
      break;
    }
    case OpKind::slice: {
      const Tensor& a = rec.inputs[0];
      const std::size_t before = rec.attrs.offset;
      const std::size_t after = a.numel() - before - g.numel();
      if (before == 0 && after == 0) {
        grads[0] = reshape(g, a.shape());
        break;
      }
      std::vector<Tensor> parts;
      if (before > 0) parts.push_back(Tensor::zeros({before}));
      parts.push_back(g);
      if (after > 0) parts.push_back(Tensor::zeros({after}));
      grads[0] = reshape(concat(parts), a.shape());
      break;
    }
  }

  if (g_faulty_op.load(std::memory_order_relaxed) ==
      static_cast<int>(rec.kind)) {
    for (auto& gi : grads) {
      if (gi) gi = scale(*gi, 1.25);
    }
  }
  return grads;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ',';
    s += std::to_string(shape[i]);
  }
  return s + ']';
}

std::string_view op_name(OpKind kind) {
  return kOpNames[static_cast<std::size_t>(kind)];
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

std::span<const OpKind> differentiable_ops() { return kDifferentiableOps; }

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor()
    : shape_{1}, values_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (autodiff::numel(shape_) != values.size()) {
    throw ShapeError("shape " + to_string(shape_) + " needs " +
                     std::to_string(autodiff::numel(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = autodiff::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return (*values_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  t.generation_ = 0;
  return t;
}

// --- Tape ------------------------------------------------------------------

namespace {
std::atomic<std::uint64_t> g_next_generation{1};
}

Tape::Tape() : generation_(g_next_generation.fetch_add(1)) {}

Tensor Tape::parameter(const Tensor& value) {
  return append(OpKind::leaf, {value.detach()}, {}, value.detach());
}

void Tape::clear() {
  records_.clear();
  generation_ = g_next_generation.fetch_add(1);
}

bool Tape::owns(const Tensor& t) const noexcept {
  return t.tape_ == this && t.generation_ == generation_ &&
         t.node_ < records_.size();
}

bool Tape::replay() const {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const OpRecord& rec = records_[i];
    for (const auto& in : rec.inputs) {
      if (in.on_tape() && in.node() >= i) return false;
    }
    const Result r = compute(rec.kind, rec.inputs, rec.attrs);
    if (r.shape != rec.output.shape()) return false;
    const auto stored = rec.output.values();
    if (!std::equal(r.values.begin(), r.values.end(), stored.begin())) {
      return false;
    }
  }
  return true;
}

Tensor Tape::append(OpKind kind, std::vector<Tensor> inputs, OpAttrs attrs,
                    Tensor output) {
  output.tape_ = this;
  output.node_ = records_.size();
  output.generation_ = generation_;
  records_.push_back({kind, std::move(inputs), std::move(attrs), output});
  return output;
}

// --- Recording -------------------------------------------------------------

Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  if (kind == OpKind::leaf) {
    throw InvalidArgument("apply: leaves are created with Tape::parameter");
  }
  Tape* tape = nullptr;
  for (const auto& t : inputs) {
    if (!t.on_tape()) continue;
    if (!t.tape()->owns(t)) {
      throw InvalidArgument(std::string(op_name(kind)) +
                            ": operand refers to a cleared tape");
    }
    if (tape != nullptr && tape != t.tape()) {
      throw InvalidArgument(std::string(op_name(kind)) +
                            ": operands live on different tapes");
    }
    tape = t.tape();
  }

  Result r = compute(kind, inputs, attrs);
  for (double v : r.values) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string(op_name(kind)) + ": non-finite result");
    }
  }
  Tensor out(std::move(r.shape), std::move(r.values));
  if (tape == nullptr) return out;
  return tape->append(kind, {inputs.begin(), inputs.end()}, attrs,
                      std::move(out));
}

namespace {
Tensor apply2(OpKind kind, const Tensor& a, const Tensor& b,
              const OpAttrs& attrs = {}) {
  const std::array<Tensor, 2> in{a, b};
  return apply(kind, in, attrs);
}
Tensor apply1(OpKind kind, const Tensor& a, const OpAttrs& attrs = {}) {
  return apply(kind, std::span<const Tensor>(&a, 1), attrs);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return apply2(OpKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply2(OpKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply2(OpKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return apply2(OpKind::div, a, b); }

Tensor scale(const Tensor& a, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return apply1(OpKind::scalar_mul, a, attrs);
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a,
              bool transpose_b) {
  OpAttrs attrs;
  attrs.transpose_a = transpose_a;
  attrs.transpose_b = transpose_b;
  return apply2(OpKind::matmul, a, b, attrs);
}

Tensor relu(const Tensor& a) { return apply1(OpKind::relu, a); }
Tensor tanh(const Tensor& a) { return apply1(OpKind::tanh, a); }
Tensor exp(const Tensor& a) { return apply1(OpKind::exp, a); }
Tensor log(const Tensor& a) { return apply1(OpKind::log, a); }
Tensor sum(const Tensor& a) { return apply1(OpKind::sum, a); }
Tensor mean(const Tensor& a) { return apply1(OpKind::mean, a); }
Tensor l2_norm(const Tensor& a) { return apply1(OpKind::l2_norm, a); }
Tensor dot(const Tensor& a, const Tensor& b) { return apply2(OpKind::dot, a, b); }

Tensor softmax_cross_entropy(const Tensor& logits,
                             std::shared_ptr<const std::vector<int>> labels) {
  OpAttrs attrs;
  attrs.labels = std::move(labels);
  return apply1(OpKind::softmax_cross_entropy, logits, attrs);
}

Tensor concat(std::span<const Tensor> parts) {
  return apply(OpKind::concat, parts);
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return apply(OpKind::concat, std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& a, std::size_t offset, Shape shape) {
  OpAttrs attrs;
  attrs.offset = offset;
  attrs.shape = std::move(shape);
  return apply1(OpKind::slice, a, attrs);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " +
                     to_string(shape) + " changes the element count");
  }
  if (shape == a.shape()) return a;
  return slice(a, 0, std::move(shape));
}

// --- Reverse sweep ---------------------------------------------------------

std::vector<Tensor> gradients(const Tensor& scalar, std::span<const Tensor> wrt,
                              bool create_graph) {
  if (!scalar.on_tape() || !scalar.tape()->owns(scalar)) {
    throw InvalidArgument("backward: scalar is not on an active tape");
  }
  if (scalar.numel() != 1) {
    throw ShapeError("backward: expected a single-element tensor, got shape " +
                     to_string(scalar.shape()));
  }
  Tape& tape = *scalar.tape();
  for (const auto& p : wrt) {
    if (p.tape() != &tape || !tape.owns(p)) {
      throw InvalidArgument("backward: parameter is not on the scalar's tape");
    }
  }

  const std::size_t root = scalar.node();
  std::vector<std::optional<Tensor>> adjoint(root + 1);
  adjoint[root] = Tensor::ones(scalar.shape());

  // New records may be appended while sweeping (create_graph); the deque
  // keeps references to existing records stable.
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!adjoint[i]) continue;
    const OpRecord& rec = tape.record(i);
    if (rec.kind == OpKind::leaf) continue;
    Grads grads = backward_rule(rec, *adjoint[i], create_graph);
    for (std::size_t j = 0; j < grads.size(); ++j) {
      if (!grads[j]) continue;
      const std::size_t target = rec.inputs[j].node();
      auto& slot = adjoint[target];
      slot = slot ? add(*slot, *grads[j]) : *grads[j];
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& p : wrt) {
    if (p.node() <= root && adjoint[p.node()]) {
      Tensor g = *adjoint[p.node()];
      out.push_back(create_graph ? g : g.detach());
    } else {
      out.push_back(Tensor::zeros(p.shape()));
    }
  }
  return out;
}

namespace testing {
void inject_backward_fault(std::optional<OpKind> kind) {
  g_faulty_op.store(kind ? static_cast<int>(*kind) : -1);
}
}  // namespace testing

}  // namespace gradguide::autodiff
