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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gradguide/autodiff.hpp"

namespace gradguide {

using autodiff::Shape;
using autodiff::Tensor;

struct ParameterSlot {
  std::string name;
  Shape shape;
  std::size_t offset = 0;

  bool operator==(const ParameterSlot&) const = default;
};

/// Ordered (name, shape, offset) description of a flattened parameter vector.
class ParameterLayout {
 public:
  void add(std::string name, Shape shape);

  std::span<const ParameterSlot> slots() const noexcept { return slots_; }
  std::size_t count() const noexcept { return slots_.size(); }
  std::size_t total() const noexcept { return total_; }

  bool operator==(const ParameterLayout&) const = default;

 private:
  std::vector<ParameterSlot> slots_;
  std::size_t total_ = 0;
};

/// Gradient in flattened parameter space. `flat` is rank-1 with
/// layout.total() entries; it is a tape node when produced with create_graph.
struct GradientVector {
  ParameterLayout layout;
  Tensor flat;

  std::size_t size() const noexcept { return flat.numel(); }
  std::span<const double> values() const noexcept { return flat.values(); }
  double norm() const;
  GradientVector detach() const { return {layout, flat.detach()}; }
};

/// Named model tensors in layout order. Values are constants unless the set
/// was produced by attach().
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(ParameterLayout layout, std::vector<Tensor> tensors);

  static ParameterSet from_flat(const ParameterLayout& layout,
                                std::span<const double> flat);

  const ParameterLayout& layout() const noexcept { return layout_; }
  std::span<const Tensor> tensors() const noexcept { return tensors_; }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  const Tensor& at(std::string_view name) const;
  std::size_t size() const noexcept { return layout_.total(); }

  /// Copy whose tensors are fresh leaves on `tape`.
  ParameterSet attach(autodiff::Tape& tape) const;
  std::vector<double> flatten() const;

 private:
  ParameterLayout layout_;
  std::vector<Tensor> tensors_;
};

/// Builds a scalar loss from (possibly tape-bound) parameters.
using LossEvaluator = std::function<Tensor(const ParameterSet&)>;

/// Gradient of `scalar` with respect to `params`, flattened per the layout.
GradientVector backward(const Tensor& scalar, const ParameterSet& params,
                        bool create_graph);

/// Gradient of the evaluator's loss at `params` (values only).
GradientVector loss_gradient(const LossEvaluator& loss,
                             const ParameterSet& params);

/// Hessian-vector product H v at `params`, computed as grad(g . v) by
/// differentiating through the backward pass.
GradientVector hvp(const LossEvaluator& loss, const ParameterSet& params,
                   std::span<const double> v);

}  // namespace gradguide
