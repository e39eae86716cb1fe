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

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gradguide::autodiff {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  div,
  scalar_mul,
  matmul,
  relu,
  tanh,
  exp,
  log,
  sum,
  mean,
  l2_norm,
  dot,
  softmax_cross_entropy,
  concat,
  slice,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

/// Every recorded (non-leaf) op kind, in declaration order.
std::span<const OpKind> differentiable_ops();

/// Per-op parameters. Only the fields relevant to an op kind are read.
struct OpAttrs {
  double scalar = 0.0;       // scalar_mul
  bool transpose_a = false;  // matmul
  bool transpose_b = false;  // matmul
  std::size_t offset = 0;    // slice
  Shape shape;               // slice output shape
  std::shared_ptr<const std::vector<int>> labels;  // softmax_cross_entropy
};

class Tape;

/// Row-major block of doubles. A tensor is either a constant or a handle to
/// a node on a Tape; the values are immutable and shared between copies.
/// A tape-bound tensor must not outlive its tape or survive Tape::clear().
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor filled(Shape shape, double value);
  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return filled(std::move(shape), 1.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return values_->size(); }
  std::span<const double> values() const noexcept { return *values_; }
  double operator[](std::size_t i) const { return (*values_)[i]; }
  /// Value of a single-element tensor.
  double item() const;

  bool on_tape() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }

  /// Same values, no tape link.
  Tensor detach() const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
  std::uint64_t generation_ = 0;
};

struct OpRecord {
  OpKind kind = OpKind::leaf;
  std::vector<Tensor> inputs;
  OpAttrs attrs;
  Tensor output;
};

/// Ordered record of operations for reverse-mode differentiation. Inputs of
/// a record always precede it. Backward rules are built from recorded ops,
/// so a gradient computed with create_graph can be differentiated again.
/// Single-threaded; give each concurrent run its own tape.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf.
  Tensor parameter(const Tensor& value);

  std::size_t size() const noexcept { return records_.size(); }
  std::uint64_t generation() const noexcept { return generation_; }
  const OpRecord& record(std::size_t node) const { return records_.at(node); }

  /// Drops every record and invalidates outstanding handles.
  void clear();

  /// True when `t` is a live node of this tape.
  bool owns(const Tensor& t) const noexcept;

  /// Recomputes every record from its inputs' stored values and checks the
  /// outputs are bitwise identical.
  bool replay() const;

 private:
  friend Tensor apply(OpKind, std::span<const Tensor>, const OpAttrs&);

  Tensor append(OpKind kind, std::vector<Tensor> inputs, OpAttrs attrs,
                Tensor output);

  std::deque<OpRecord> records_;
  std::uint64_t generation_;
};

/// Evaluates `kind` on `inputs` and records it on their tape (if any input
/// is tape-bound). Throws ShapeError for illegal shapes and DomainError for
/// log/division outside the domain or a non-finite result.
Tensor apply(OpKind kind, std::span<const Tensor> inputs,
             const OpAttrs& attrs = {});

// Elementwise binary ops accept equal shapes, a single-element operand, or a
// right operand whose shape is a suffix of the left one (row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// op(a) @ op(b) for rank-2 operands, op = transpose when flagged.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor l2_norm(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
/// Mean cross-entropy of softmax(logits[b, :]) against labels[b].
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::shared_ptr<const std::vector<int>> labels);
/// Flattened concatenation into a rank-1 tensor.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
/// Elements [offset, offset + numel(shape)) of `a`, viewed with `shape`.
Tensor slice(const Tensor& a, std::size_t offset, Shape shape);
Tensor reshape(const Tensor& a, Shape shape);

/// d(scalar)/d(wrt[i]) for each i. With create_graph the results are tape
/// nodes (where they depend on the tape at all) and can be differentiated
/// again. Parameters the scalar does not depend on receive zeros.
std::vector<Tensor> gradients(const Tensor& scalar, std::span<const Tensor> wrt,
                              bool create_graph);

namespace testing {
/// Perturbs the backward rule of `kind` (nullopt clears). Used to confirm
/// that gradient checks catch a broken rule.
void inject_backward_fault(std::optional<OpKind> kind);
}  // namespace testing

}  // namespace gradguide::autodiff
