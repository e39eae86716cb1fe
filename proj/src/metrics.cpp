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

#include "gradguide/metrics.hpp"

#include <cmath>

#include "gradguide/error.hpp"
#include "gradguide/guidance.hpp"

namespace gradguide::metrics {

double gradient_stability(std::span<const double> norms) {
  if (norms.size() < 2) {
    throw InvalidArgument("gradient_stability: need at least two norms");
  }
  double mean = 0.0;
  for (double n : norms) {
    if (!(n >= 0.0)) throw InvalidArgument("gradient_stability: negative norm");
    mean += n;
  }
  mean /= static_cast<double>(norms.size());
  if (mean == 0.0) return 1.0;
  double var = 0.0;
  for (double n : norms) var += (n - mean) * (n - mean);
  var /= static_cast<double>(norms.size());
  return 1.0 / (1.0 + std::sqrt(var) / mean);
}

double directional_alignment(std::span<const std::vector<double>> gradients,
                             std::span<const std::vector<double>> priors) {
  if (gradients.size() != priors.size()) {
    throw InvalidArgument("directional_alignment: history lengths differ");
  }
  if (gradients.empty()) {
    throw InvalidArgument("directional_alignment: empty history");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < gradients.size(); ++k) {
    try {
      total += guidance::cosine(gradients[k], priors[k], 0.0);
    } catch (const DomainError&) {
      throw InvalidArgument("directional_alignment: zero vector at step " +
                            std::to_string(k));
    }
  }
  return total / static_cast<double>(gradients.size());
}

RunSummary summarize(const trainer::RunReport& report,
                     std::optional<double> loss_threshold) {
  const auto& h = report.history;
  if (h.empty()) throw InvalidArgument("summarize: empty history");

  RunSummary s;
  s.avg_accuracy = report.final_accuracy;
  s.final_loss = h.back().loss.total;

  std::vector<double> norms;
  norms.reserve(h.size());
  for (const auto& r : h) norms.push_back(r.loss.grad_norm);
  if (norms.size() < 2) {
    s.gradient_stability = 1.0;
    s.stability_degenerate = true;
  } else {
    s.gradient_stability = gradient_stability(norms);
  }

  double cos_total = 0.0;
  std::size_t cos_count = 0;
  for (const auto& r : h) {
    if (r.loss.cos_prior) {
      cos_total += *r.loss.cos_prior;
      ++cos_count;
    }
  }
  if (cos_count == 0) {
    s.alignment_missing = true;
  } else {
    s.directional_alignment = cos_total / static_cast<double>(cos_count);
  }

  if (loss_threshold) {
    for (const auto& r : h) {
      if (r.loss.total < *loss_threshold) {
        s.steps_to_threshold = r.step;
        break;
      }
    }
  }
  return s;
}

}  // namespace gradguide::metrics
