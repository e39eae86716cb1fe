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

#include "gradguide/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gradguide/error.hpp"

namespace gradguide::guidance {

namespace ad = autodiff;

namespace {

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Tensor flat_constant(std::span<const double> v) {
  return Tensor({v.size()}, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

std::string_view mode_name(GradientMode mode) {
  return mode == GradientMode::exact ? "exact" : "fd-hvp";
}

GradientMode parse_mode(std::string_view name) {
  if (name == "exact") return GradientMode::exact;
  if (name == "fd-hvp") return GradientMode::fd_hvp;
  throw InvalidArgument("unknown regularizer gradient mode '" +
                        std::string(name) + "'");
}

void GuidanceConfig::validate() const {
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(std::string("guidance: ") + what +
                            " must be finite and >= 0");
    }
  };
  nonneg(lambda1, "lambda1");
  nonneg(lambda2, "lambda2");
  nonneg(lambda3, "lambda3");
  if (tau && (!(*tau > 0.0) || !std::isfinite(*tau))) {
    throw InvalidArgument("guidance: tau must be finite and > 0");
  }
  if (!(prior_decay >= 0.0 && prior_decay < 1.0)) {
    throw InvalidArgument("guidance: prior_decay must lie in [0, 1)");
  }
  if (!(norm_guard > 0.0)) {
    throw InvalidArgument("guidance: norm_guard must be > 0");
  }
  if (dynamic_strength) {
    throw InvalidArgument(
        "guidance: dynamic_strength is reserved and not supported");
  }
}

double cosine(std::span<const double> a, std::span<const double> b,
              double guard) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: vectors differ in length (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  const double na = norm_of(a);
  const double nb = norm_of(b);
  if (na <= guard || nb <= guard) {
    throw DomainError("cosine: zero-norm vector");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

Tensor base_loss(const ParameterSet& params, const model::ModelSpec& spec,
                 const tasks::TaskDataset& batch) {
  if (batch.size() == 0) throw InvalidArgument("base_loss: empty batch");
  if (batch.input_dim != spec.input_dim) {
    throw ShapeError("base_loss: batch width " + std::to_string(batch.input_dim) +
                     " != model input_dim " + std::to_string(spec.input_dim));
  }
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= spec.class_count) {
      throw InvalidArgument("base_loss: label " + std::to_string(y) +
                            " outside [0, " + std::to_string(spec.class_count) +
                            ")");
    }
  }
  const Tensor logits = model::forward(params, spec, batch.input_tensor());
  return ad::softmax_cross_entropy(logits, batch.shared_labels());
}

GradientVector compute_gradient(const Tensor& loss, const ParameterSet& params,
                                bool create_graph) {
  return backward(loss, params, create_graph);
}

DirectionTerm direction_regularizer(const GradientVector& g,
                                    const DirectionPrior& prior, double lambda1,
                                    double norm_guard) {
  if (!prior.initialized()) {
    throw InvalidArgument("direction_regularizer: prior has no observations");
  }
  if (prior.direction.size() != g.size()) {
    throw ShapeError("direction_regularizer: prior length " +
                     std::to_string(prior.direction.size()) +
                     " != gradient length " + std::to_string(g.size()));
  }
  if (g.norm() <= norm_guard) {
    const double d2 = norm_of(prior.direction);
    return {Tensor::scalar(lambda1 * d2 * d2), true};
  }
  const Tensor unit = ad::div(g.flat, ad::l2_norm(g.flat));
  const Tensor diff = ad::sub(unit, flat_constant(prior.direction));
  return {ad::scale(ad::dot(diff, diff), lambda1), false};
}

Tensor magnitude_regularizer(const GradientVector& g, double tau, double lambda2,
                             double norm_guard) {
  const Tensor norm = g.norm() <= norm_guard ? Tensor::scalar(g.norm())
                                             : ad::l2_norm(g.flat);
  const Tensor gap = ad::sub(norm, Tensor::scalar(tau));
  return ad::scale(ad::mul(gap, gap), lambda2);
}

Tensor contrast_loss(const GradientVector& target, std::span<const double> source,
                     double lambda3, double norm_guard) {
  if (source.size() != target.size()) {
    throw ShapeError("contrast_loss: gradient lengths differ (" +
                     std::to_string(target.size()) + " vs " +
                     std::to_string(source.size()) + ")");
  }
  const double source_norm = norm_of(source);
  if (target.norm() <= norm_guard || source_norm <= norm_guard) {
    throw DomainError("contrast_loss: zero-norm gradient");
  }
  const Tensor cos = ad::div(ad::dot(target.flat, flat_constant(source)),
                             ad::scale(ad::l2_norm(target.flat), source_norm));
  return ad::scale(ad::sub(Tensor::scalar(1.0), cos), lambda3);
}

namespace {

struct Terms {
  std::optional<Tensor> dir;
  std::optional<Tensor> mag;
  std::optional<Tensor> contrast;
  bool guarded = false;
};

Terms build_terms(const GradientVector& g, const GuidanceConfig& config,
                  double tau, const DirectionPrior& prior,
                  std::optional<std::span<const double>> source) {
  Terms t;
  if (config.lambda1 != 0.0) {
    DirectionTerm d =
        direction_regularizer(g, prior, config.lambda1, config.norm_guard);
    t.dir = d.value;
    t.guarded = d.guarded;
  }
  if (config.lambda2 != 0.0) {
    t.mag = magnitude_regularizer(g, tau, config.lambda2, config.norm_guard);
  }
  if (config.lambda3 != 0.0 && source) {
    t.contrast = contrast_loss(g, *source, config.lambda3, config.norm_guard);
  }
  return t;
}

}  // namespace

Objective guided_objective(const Tensor& base, const ParameterSet& params,
                           const GuidanceConfig& config, double tau,
                           const DirectionPrior& prior,
                           std::optional<std::span<const double>> source) {
  const bool create_graph =
      config.mode == GradientMode::exact && config.any_active();
  GradientVector g = compute_gradient(base, params, create_graph);
  const Terms terms = build_terms(g, config, tau, prior, source);

  Objective obj{base, {}, std::move(g)};
  LossBreakdown& b = obj.breakdown;
  b.base = base.item();
  b.grad_norm = obj.gradient.norm();
  b.guarded = terms.guarded;
  if (terms.dir) {
    b.dir = terms.dir->item();
    obj.total = ad::add(obj.total, *terms.dir);
  }
  if (terms.mag) {
    b.mag = terms.mag->item();
    obj.total = ad::add(obj.total, *terms.mag);
  }
  if (terms.contrast) {
    b.contrast = terms.contrast->item();
    obj.total = ad::add(obj.total, *terms.contrast);
  }
  b.total = obj.total.item();

  const auto gv = obj.gradient.values();
  if (b.grad_norm > config.norm_guard) {
    if (prior.initialized() && prior.direction.size() == gv.size()) {
      b.cos_prior = cosine(gv, prior.direction, 0.0);
    }
    if (source && norm_of(*source) > config.norm_guard) {
      b.cos_source = cosine(gv, *source, 0.0);
    }
  }
  return obj;
}

Objective total_loss(const ParameterSet& params, const model::ModelSpec& spec,
                     const tasks::TaskDataset& batch, const GuidanceConfig& config,
                     double tau, const DirectionPrior& prior,
                     std::optional<std::span<const double>> source) {
  return guided_objective(base_loss(params, spec, batch), params, config, tau,
                          prior, source);
}

std::vector<double> regularizer_gradient_wrt_g(
    const GradientVector& g, const GuidanceConfig& config, double tau,
    const DirectionPrior& prior, std::optional<std::span<const double>> source) {
  ad::Tape tape;
  const Tensor leaf = tape.parameter(g.flat.detach());
  const GradientVector gl{g.layout, leaf};
  const Terms terms = build_terms(gl, config, tau, prior, source);

  std::optional<Tensor> total;
  for (const auto* term : {&terms.dir, &terms.mag, &terms.contrast}) {
    if (!*term || !(*term)->on_tape()) continue;
    total = total ? ad::add(*total, **term) : **term;
  }
  if (!total) return std::vector<double>(g.size(), 0.0);
  const Tensor grad = ad::gradients(*total, std::span(&leaf, 1), false)[0];
  return {grad.values().begin(), grad.values().end()};
}

DirectionPrior update_prior(const DirectionPrior& prior,
                            std::span<const double> g, double decay,
                            double norm_guard) {
  if (!(decay >= 0.0 && decay < 1.0)) {
    throw InvalidArgument("update_prior: decay must lie in [0, 1)");
  }
  DirectionPrior next = prior;
  const double gn = norm_of(g);
  if (gn <= norm_guard) {
    ++next.rejected;
    return next;
  }
  if (!prior.initialized()) {
    next.direction.assign(g.begin(), g.end());
    for (double& x : next.direction) x /= gn;
  } else {
    if (prior.direction.size() != g.size()) {
      throw ShapeError("update_prior: gradient length differs from prior");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      next.direction[i] = decay * prior.direction[i] + (1.0 - decay) * (g[i] / gn);
    }
    const double dn = norm_of(next.direction);
    if (dn <= norm_guard) {
      // Exactly opposite to the prior with decay 0.5: keep the newest direction.
      for (std::size_t i = 0; i < g.size(); ++i) next.direction[i] = g[i] / gn;
    } else {
      for (double& x : next.direction) x /= dn;
    }
  }
  ++next.observations;
  return next;
}

}  // namespace gradguide::guidance
