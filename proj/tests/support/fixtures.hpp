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

// Shared fixtures for the unit tests.

#pragma once

#include <memory>
#include <vector>

#include "gradguide/autodiff.hpp"
#include "gradguide/parameters.hpp"
#include "oracles.hpp"

namespace fixtures {

/// Tape-side quadratic 1/2 t'At + b't over a single [n] parameter.
inline gradguide::LossEvaluator quadratic_loss(const oracle::Quadratic& q) {
  using namespace gradguide::autodiff;
  auto a = std::make_shared<Tensor>(Shape{q.n, q.n}, q.a);
  auto b = std::make_shared<Tensor>(Shape{q.n}, q.b);
  const std::size_t n = q.n;
  return [a, b, n](const gradguide::ParameterSet& p) {
    const Tensor t = reshape(p[0], {n, 1});
    const Tensor at = matmul(*a, t);
    return add(scale(sum(mul(t, at)), 0.5), dot(p[0], *b));
  };
}

inline gradguide::ParameterSet vector_params(const std::vector<double>& v) {
  gradguide::ParameterLayout layout;
  layout.add("theta", {v.size()});
  return gradguide::ParameterSet::from_flat(layout, v);
}

}  // namespace fixtures
