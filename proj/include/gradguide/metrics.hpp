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
#include <optional>
#include <span>
#include <vector>

#include "gradguide/trainer.hpp"

namespace gradguide::metrics {

/// 1 / (1 + CV) of a gradient-norm history, CV = population std / mean.
/// An all-zero history scores 1. Needs at least two entries.
double gradient_stability(std::span<const double> norms);

/// Mean over steps of cos(g_k, prior_k), pairing entries by index.
double directional_alignment(std::span<const std::vector<double>> gradients,
                             std::span<const std::vector<double>> priors);

struct RunSummary {
  double avg_accuracy = 0.0;
  double gradient_stability = 1.0;
  double directional_alignment = 0.0;
  double final_loss = 0.0;
  std::optional<std::size_t> steps_to_threshold;
  /// Fewer than two steps: stability reported as 1 by convention.
  bool stability_degenerate = false;
  /// No step had a prior in force: alignment reported as 0.
  bool alignment_missing = false;
};

/// Aggregates a run. Alignment uses the per-step cos(g, d_prior) logged by the
/// trainer; steps_to_threshold is the first step whose total loss is below
/// `loss_threshold`.
RunSummary summarize(const trainer::RunReport& report,
                     std::optional<double> loss_threshold = std::nullopt);

}  // namespace gradguide::metrics
