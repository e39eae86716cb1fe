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

#include "gradguide/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "gradguide/random.hpp"

namespace gradguide::trainer {

namespace ad = autodiff;
using guidance::GradientMode;
using guidance::LossBreakdown;

std::string_view optimizer_name(Optimizer opt) {
  return opt == Optimizer::sgd ? "sgd" : "adam";
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("train: learning_rate must be finite and > 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("train: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidArgument("train: adam_eps must be > 0");
  if (batch_size && *batch_size < 1) {
    throw InvalidArgument("train: batch_size must be >= 1");
  }
  if (!(gradient_clip >= 0.0)) {
    throw InvalidArgument("train: gradient_clip must be >= 0");
  }
  guidance.validate();
}

DivergenceError::DivergenceError(std::size_t step, LossBreakdown breakdown,
                                 const std::string& detail)
    : Error("diverged at step " + std::to_string(step) + ": " + detail),
      step_(step),
      breakdown_(breakdown) {}

namespace {

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool breakdown_finite(const LossBreakdown& b) {
  return std::isfinite(b.base) && std::isfinite(b.dir) && std::isfinite(b.mag) &&
         std::isfinite(b.contrast) && std::isfinite(b.total) &&
         std::isfinite(b.grad_norm);
}

// H v ~ (grad L(theta + eps v) - grad L(theta)) / eps.
std::vector<double> finite_difference_hvp(const LossEvaluator& loss,
                                          const ParameterSet& params,
                                          std::span<const double> grad,
                                          std::span<const double> v) {
  const double vn = norm_of(v);
  std::vector<double> out(v.size(), 0.0);
  if (vn == 0.0) return out;
  std::vector<double> theta = params.flatten();
  const double eps = 1e-6 * (1.0 + norm_of(theta)) / vn;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eps * v[i];
  const GradientVector shifted =
      loss_gradient(loss, ParameterSet::from_flat(params.layout(), theta));
  const auto gs = shifted.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gs[i] - grad[i]) / eps;
  return out;
}

struct Update {
  LossBreakdown breakdown;
  std::vector<double> gradient;
};

Update compute_update(const TrainState& state, const LossEvaluator& loss,
                      const TrainConfig& config) {
  const auto& gcfg = config.guidance;
  std::optional<std::span<const double>> source;
  if (state.source_gradient) source = std::span<const double>(*state.source_gradient);

  ad::Tape tape;
  const ParameterSet leaves = state.params.attach(tape);
  const Tensor base = loss(leaves);
  const guidance::Objective obj =
      guidance::guided_objective(base, leaves, gcfg, state.tau, state.prior, source);

  Update up{obj.breakdown, {}};
  const auto g = obj.gradient.values();
  if (!gcfg.any_active()) {
    up.gradient.assign(g.begin(), g.end());
  } else if (gcfg.mode == GradientMode::exact) {
    const GradientVector full = backward(obj.total, leaves, false);
    up.gradient.assign(full.values().begin(), full.values().end());
  } else {
    // grad R(g(theta)) = H dR/dg with H symmetric.
    const std::vector<double> dr = guidance::regularizer_gradient_wrt_g(
        obj.gradient.detach(), gcfg, state.tau, state.prior, source);
    const std::vector<double> hv =
        finite_difference_hvp(loss, state.params, g, dr);
    up.gradient.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) up.gradient[i] = g[i] + hv[i];
  }
  return up;
}

}  // namespace

std::vector<double> total_loss_gradient(const TrainState& state,
                                        const LossEvaluator& loss,
                                        const TrainConfig& config) {
  return compute_update(state, loss, config).gradient;
}

StepRecord train_step(TrainState& state, const LossEvaluator& loss,
                      const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t step = state.step + 1;

  Update up;
  try {
    up = compute_update(state, loss, config);
  } catch (const DomainError& e) {
    throw DivergenceError(step, {}, e.what());
  }
  if (!breakdown_finite(up.breakdown)) {
    throw DivergenceError(step, up.breakdown, "non-finite loss");
  }
  if (!all_finite(up.gradient)) {
    throw DivergenceError(step, up.breakdown, "non-finite gradient");
  }

  std::vector<double>& grad = up.gradient;
  if (config.gradient_clip > 0.0) {
    const double gn = norm_of(grad);
    if (gn > config.gradient_clip) {
      const double c = config.gradient_clip / gn;
      for (double& x : grad) x *= c;
    }
  }

  std::vector<double> theta = state.params.flatten();
  std::vector<double> next(theta.size());
  const double lr = config.learning_rate;
  if (config.optimizer == Optimizer::sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) next[i] = theta[i] - lr * grad[i];
  } else {
    auto& m = state.moments.first_moment;
    auto& v = state.moments.second_moment;
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    const std::size_t t = ++state.moments.updates;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      next[i] = theta[i] - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
    }
  }
  if (!all_finite(next)) {
    throw DivergenceError(step, up.breakdown, "non-finite parameters");
  }

  double update_sq = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = next[i] - theta[i];
    update_sq += d * d;
  }
  state.params = ParameterSet::from_flat(state.params.layout(), next);
  state.step = step;

  StepRecord rec;
  rec.step = step;
  rec.loss = up.breakdown;
  rec.update_norm = std::sqrt(update_sq);
  rec.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  state.history.push_back(rec);
  return rec;
}

StepRecord train_step(TrainState& state, const model::ModelSpec& spec,
                      const tasks::TaskDataset& batch, const TrainConfig& config) {
  return train_step(
      state,
      [&](const ParameterSet& p) { return guidance::base_loss(p, spec, batch); },
      config);
}

std::vector<int> predict(const ParameterSet& params, const model::ModelSpec& spec,
                         const tasks::TaskDataset& dataset) {
  const Tensor logits = model::forward(params, spec, dataset.input_tensor());
  const auto z = logits.values();
  const std::size_t k = spec.class_count;
  std::vector<int> out(dataset.size());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (z[r * k + c] > z[r * k + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double evaluate(const ParameterSet& params, const model::ModelSpec& spec,
                const tasks::TaskDataset& dataset) {
  if (dataset.size() == 0) throw InvalidArgument("evaluate: empty dataset");
  const std::vector<int> pred = predict(params, spec, dataset);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == dataset.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

// Endless sequence of minibatches over a dataset, reshuffled every pass.
class BatchCursor {
 public:
  BatchCursor(const tasks::TaskDataset& data, std::optional<std::size_t> batch,
              Rng rng)
      : data_(data), rng_(std::move(rng)) {
    size_ = std::min(batch.value_or(data.size()), data.size());
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = order_.size();
  }

  bool full() const { return size_ == data_.size(); }

  tasks::TaskDataset next() {
    if (full()) return data_;
    if (pos_ + size_ > order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    const std::span<const std::size_t> idx(order_.data() + pos_, size_);
    pos_ += size_;
    return data_.subset(idx);
  }

 private:
  const tasks::TaskDataset& data_;
  Rng rng_;
  std::size_t size_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RunReport train(const model::ModelSpec& spec, const TrainingData& data,
                const TrainConfig& config) {
  config.validate();
  spec.validate();
  data.train.validate();
  data.eval.validate();
  if (data.train.size() == 0) throw InvalidArgument("train: empty training set");
  const auto& gcfg = config.guidance;
  if (gcfg.lambda3 > 0.0 && !data.source) {
    throw InvalidArgument("train: lambda3 > 0 requires a source task");
  }
  if (data.source) data.source->validate();

  TrainState state;
  state.params = model::init_model(spec);
  auto loss_on = [&spec](const tasks::TaskDataset& batch) {
    return [&spec, batch](const ParameterSet& p) {
      return guidance::base_loss(p, spec, batch);
    };
  };

  // Warmup: observe gradients of the source (or target) task at the initial
  // parameters.
  const tasks::TaskDataset& warm_task = data.source ? *data.source : data.train;
  BatchCursor warm_cursor(warm_task, config.batch_size, Rng::stream(config.seed, 11));
  std::vector<double> warm_norms;
  for (std::size_t w = 0; w < config.warmup_steps; ++w) {
    const GradientVector g = loss_gradient(loss_on(warm_cursor.next()), state.params);
    state.prior = guidance::update_prior(state.prior, g.values(), gcfg.prior_decay,
                                         gcfg.norm_guard);
    warm_norms.push_back(g.norm());
  }
  if (gcfg.tau) {
    state.tau = *gcfg.tau;
  } else {
    if (warm_norms.empty()) {
      warm_norms.push_back(loss_gradient(loss_on(warm_task), state.params).norm());
    }
    state.tau = median(warm_norms);
    if (!(state.tau > 0.0)) {
      throw InvalidArgument("train: automatic tau is zero (flat initial loss)");
    }
  }
  const bool prior_tracks_source = data.source && !config.freeze_prior;
  if (gcfg.lambda1 > 0.0 && !state.prior.initialized() && !prior_tracks_source) {
    throw InvalidArgument(
        "train: lambda1 > 0 needs warmup steps or a source task to seed the prior");
  }

  RunReport report;
  report.spec = spec;
  report.config = config;
  report.tau = state.tau;
  report.initial_accuracy = evaluate(state.params, spec, data.eval);

  BatchCursor cursor(data.train, config.batch_size, Rng::stream(config.seed, 12));
  std::optional<BatchCursor> source_cursor;
  if (data.source) {
    source_cursor.emplace(*data.source, config.batch_size,
                          Rng::stream(config.seed, 13));
  }
  const std::size_t batch = std::min(config.batch_size.value_or(data.train.size()),
                                     data.train.size());
  const std::size_t steps_per_epoch = (data.train.size() + batch - 1) / batch;
  const std::size_t total_steps = config.epochs * steps_per_epoch;

  for (std::size_t s = 0; s < total_steps; ++s) {
    if (source_cursor) {
      const GradientVector gs =
          loss_gradient(loss_on(source_cursor->next()), state.params);
      state.source_gradient.emplace(gs.values().begin(), gs.values().end());
      if (prior_tracks_source) {
        state.prior = guidance::update_prior(state.prior, gs.values(),
                                             gcfg.prior_decay, gcfg.norm_guard);
      }
    }
    const tasks::TaskDataset step_batch = cursor.next();
    train_step(state, spec, step_batch, config);
    const bool last = s + 1 == total_steps;
    if (last || (config.eval_interval > 0 && state.step % config.eval_interval == 0)) {
      state.history.back().eval_accuracy = evaluate(state.params, spec, data.eval);
    }
  }

  report.history = std::move(state.history);
  report.final_accuracy = report.history.empty()
                              ? report.initial_accuracy
                              : *report.history.back().eval_accuracy;
  report.final_train_accuracy = evaluate(state.params, spec, data.train);
  report.prior_observations = state.prior.observations;
  report.final_params = std::move(state.params);
  return report;
}

}  // namespace gradguide::trainer
