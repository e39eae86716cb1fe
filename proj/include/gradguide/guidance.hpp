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
#include <string_view>
#include <vector>

#include "gradguide/model.hpp"
#include "gradguide/parameters.hpp"
#include "gradguide/tasks.hpp"

namespace gradguide::guidance {

/// How the gradient of the regularizers (which depend on g = grad L_base) is
/// obtained: exact double backprop, or a finite-difference Hessian-vector
/// product.
enum class GradientMode { exact, fd_hvp };

std::string_view mode_name(GradientMode mode);
GradientMode parse_mode(std::string_view name);

struct GuidanceConfig {
  double lambda1 = 0.1;  // direction weight
  double lambda2 = 0.1;  // magnitude weight
  double lambda3 = 0.1;  // contrast weight
  /// Target gradient norm; nullopt means "auto" (median warmup norm).
  std::optional<double> tau;
  double prior_decay = 0.9;
  GradientMode mode = GradientMode::exact;
  double norm_guard = 1e-12;
  /// Reserved: contrast-driven modulation of the step size. Must stay off.
  bool dynamic_strength = false;

  void validate() const;
  /// True when some regularizer has a nonzero weight.
  bool any_active() const noexcept {
    return lambda1 != 0.0 || lambda2 != 0.0 || lambda3 != 0.0;
  }
};

/// Unit reference direction in flattened parameter space, maintained as an
/// exponential moving average of normalized gradients.
struct DirectionPrior {
  std::vector<double> direction;
  std::size_t observations = 0;
  /// Updates rejected because the gradient norm was under the guard.
  std::size_t rejected = 0;

  bool initialized() const noexcept { return observations > 0; }
};

struct LossBreakdown {
  double base = 0.0;
  double dir = 0.0;
  double mag = 0.0;
  double contrast = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  std::optional<double> cos_prior;
  std::optional<double> cos_source;
  /// A direction term fell back to its guarded constant.
  bool guarded = false;
};

/// cos(a, b); throws DomainError if either norm is at most `guard`.
double cosine(std::span<const double> a, std::span<const double> b,
              double guard = 1e-12);

/// Mean softmax cross-entropy of the model on `batch`, recorded on the tape
/// of `params` when they are attached.
Tensor base_loss(const ParameterSet& params, const model::ModelSpec& spec,
                 const tasks::TaskDataset& batch);

/// g = d loss / d params. With create_graph, g is differentiable.
GradientVector compute_gradient(const Tensor& loss, const ParameterSet& params,
                                bool create_graph);

struct DirectionTerm {
  Tensor value;
  bool guarded = false;
};

/// lambda1 * || g/||g|| - d_prior ||^2. When ||g|| <= guard the result is the
/// constant lambda1 * ||d_prior||^2 with `guarded` set.
DirectionTerm direction_regularizer(const GradientVector& g,
                                    const DirectionPrior& prior, double lambda1,
                                    double norm_guard = 1e-12);

/// lambda2 * (||g|| - tau)^2. Below the guard the norm enters as a constant
/// (the norm is not differentiable at 0).
Tensor magnitude_regularizer(const GradientVector& g, double tau, double lambda2,
                             double norm_guard = 1e-12);

/// lambda3 * (1 - cos(g_target, g_source)). The source gradient is a constant.
Tensor contrast_loss(const GradientVector& target, std::span<const double> source,
                     double lambda3, double norm_guard = 1e-12);

struct Objective {
  Tensor total;
  LossBreakdown breakdown;
  GradientVector gradient;  // g of the base loss
};

/// Assembles L_total = L_base + R_dir + R_mag (+ R_grad when a source gradient
/// is given). A term whose weight is exactly zero is not evaluated at all.
/// In exact mode with an active term, g carries its graph so L_total can be
/// differentiated through it.
Objective guided_objective(const Tensor& base, const ParameterSet& params,
                           const GuidanceConfig& config, double tau,
                           const DirectionPrior& prior,
                           std::optional<std::span<const double>> source);

/// guided_objective on the model's base loss over `batch`.
Objective total_loss(const ParameterSet& params, const model::ModelSpec& spec,
                     const tasks::TaskDataset& batch, const GuidanceConfig& config,
                     double tau, const DirectionPrior& prior,
                     std::optional<std::span<const double>> source = std::nullopt);

/// d(R_dir + R_mag + R_grad)/dg at a fixed g, by first-order backward on a
/// tape where g is the leaf.
std::vector<double> regularizer_gradient_wrt_g(
    const GradientVector& g, const GuidanceConfig& config, double tau,
    const DirectionPrior& prior, std::optional<std::span<const double>> source);

/// d' = normalize(decay * d + (1 - decay) * g/||g||); the first observation
/// sets d' = g/||g||. A gradient under the guard leaves the prior unchanged
/// and bumps `rejected`.
DirectionPrior update_prior(const DirectionPrior& prior,
                            std::span<const double> g, double decay,
                            double norm_guard = 1e-12);

}  // namespace gradguide::guidance
