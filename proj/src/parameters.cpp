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

#include "gradguide/parameters.hpp"

#include <cmath>

#include "gradguide/error.hpp"

namespace gradguide {

namespace ad = autodiff;

void ParameterLayout::add(std::string name, Shape shape) {
  const std::size_t n = ad::numel(shape);
  slots_.push_back({std::move(name), std::move(shape), total_});
  total_ += n;
}

double GradientVector::norm() const {
  double s = 0.0;
  for (double v : values()) s += v * v;
  return std::sqrt(s);
}

ParameterSet::ParameterSet(ParameterLayout layout, std::vector<Tensor> tensors)
    : layout_(std::move(layout)), tensors_(std::move(tensors)) {
  if (tensors_.size() != layout_.count()) {
    throw InvalidArgument("parameter set: " + std::to_string(tensors_.size()) +
                          " tensors for a layout with " +
                          std::to_string(layout_.count()) + " slots");
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape() != layout_.slots()[i].shape) {
      throw ShapeError("parameter '" + layout_.slots()[i].name + "' has shape " +
                       ad::to_string(tensors_[i].shape()) + ", layout says " +
                       ad::to_string(layout_.slots()[i].shape));
    }
  }
}

ParameterSet ParameterSet::from_flat(const ParameterLayout& layout,
                                     std::span<const double> flat) {
  if (flat.size() != layout.total()) {
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                     " entries, layout needs " + std::to_string(layout.total()));
  }
  std::vector<Tensor> tensors;
  tensors.reserve(layout.count());
  for (const auto& slot : layout.slots()) {
    const auto begin = flat.begin() + static_cast<std::ptrdiff_t>(slot.offset);
    tensors.emplace_back(slot.shape,
                         std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(
                                                                ad::numel(slot.shape))));
  }
  return ParameterSet(layout, std::move(tensors));
}

const Tensor& ParameterSet::at(std::string_view name) const {
  for (std::size_t i = 0; i < layout_.count(); ++i) {
    if (layout_.slots()[i].name == name) return tensors_[i];
  }
  throw InvalidArgument("no parameter named '" + std::string(name) + "'");
}

ParameterSet ParameterSet::attach(ad::Tape& tape) const {
  std::vector<Tensor> leaves;
  leaves.reserve(tensors_.size());
  for (const auto& t : tensors_) leaves.push_back(tape.parameter(t));
  return ParameterSet(layout_, std::move(leaves));
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(layout_.total());
  for (const auto& t : tensors_) {
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  }
  return flat;
}

GradientVector backward(const Tensor& scalar, const ParameterSet& params,
                        bool create_graph) {
  const auto grads = ad::gradients(scalar, params.tensors(), create_graph);
  Tensor flat = grads.size() == 1 ? ad::reshape(grads[0], {grads[0].numel()})
                                  : ad::concat(grads);
  return {params.layout(), std::move(flat)};
}

GradientVector loss_gradient(const LossEvaluator& loss,
                             const ParameterSet& params) {
  ad::Tape tape;
  const ParameterSet leaves = params.attach(tape);
  return backward(loss(leaves), leaves, false).detach();
}

GradientVector hvp(const LossEvaluator& loss, const ParameterSet& params,
                   std::span<const double> v) {
  if (v.size() != params.size()) {
    throw ShapeError("hvp: direction has " + std::to_string(v.size()) +
                     " entries, parameters have " +
                     std::to_string(params.size()));
  }
  ad::Tape tape;
  const ParameterSet leaves = params.attach(tape);
  const GradientVector g = backward(loss(leaves), leaves, true);
  const Tensor gv =
      ad::dot(g.flat, Tensor({v.size()}, std::vector<double>(v.begin(), v.end())));
  if (!gv.on_tape()) {
    // The gradient does not depend on the parameters: H = 0.
    return {params.layout(), Tensor::zeros({params.size()})};
  }
  return backward(gv, leaves, false).detach();
}

}  // namespace gradguide
