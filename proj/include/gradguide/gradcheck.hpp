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

#include <cstdint>
#include <string>
#include <vector>

#include "gradguide/experiment.hpp"

namespace gradguide::gradcheck {

/// Outcome of one comparison between an analytic quantity and its
/// central-difference estimate.
struct CheckResult {
  std::string component;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool skipped = false;

  bool passed() const noexcept { return skipped || max_rel_error < tolerance; }
};

struct GradCheckReport {
  std::vector<CheckResult> results;

  bool ok() const;
  /// Components that failed, in order.
  std::vector<std::string> failures() const;
};

/// max_i |a_i - b_i| / max(max_i |b_i|, 1e-6).
double relative_error(std::span<const double> analytic,
                      std::span<const double> reference);

/// Finite-difference suite for the configured model and task: every op's
/// backward rule, the base-loss gradient, and (when some weight is nonzero)
/// the Hessian-vector product and the exact total-loss gradient. Models over
/// 500 parameters are rejected.
GradCheckReport check_grads(const experiment::ExperimentConfig& config);

/// The per-op part of the suite alone.
std::vector<CheckResult> check_ops(std::uint64_t seed);

}  // namespace gradguide::gradcheck
