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
#include <optional>
#include <string_view>
#include <vector>

#include "gradguide/error.hpp"
#include "gradguide/guidance.hpp"
#include "gradguide/model.hpp"
#include "gradguide/parameters.hpp"
#include "gradguide/tasks.hpp"

namespace gradguide::trainer {

enum class Optimizer { sgd, adam };

std::string_view optimizer_name(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  Optimizer optimizer = Optimizer::sgd;
  double learning_rate = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 100;
  /// nullopt trains on the full support set every step.
  std::optional<std::size_t> batch_size;
  std::uint64_t seed = 0;
  guidance::GuidanceConfig guidance;
  /// Gradient observations at the initial parameters used to seed the
  /// direction prior and the automatic tau. No updates are applied.
  std::size_t warmup_steps = 10;
  /// Max update-gradient norm; 0 disables clipping.
  double gradient_clip = 0.0;
  /// Record eval accuracy every this many steps (and at the last step);
  /// 0 records it only at the last step.
  std::size_t eval_interval = 10;
  /// Keep the warmup prior fixed instead of tracking source gradients.
  bool freeze_prior = false;

  void validate() const;
};

/// One applied update. `eval_accuracy` is set on evaluation steps.
struct StepRecord {
  std::size_t step = 0;
  guidance::LossBreakdown loss;
  double update_norm = 0.0;
  double wall_time_s = 0.0;
  std::optional<double> eval_accuracy;
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t updates = 0;
};

struct TrainState {
  ParameterSet params;
  guidance::DirectionPrior prior;
  std::optional<std::vector<double>> source_gradient;
  double tau = 1.0;
  std::size_t step = 0;
  OptimizerState moments;
  std::vector<StepRecord> history;
};

/// Raised when a loss or gradient becomes non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, guidance::LossBreakdown breakdown,
                  const std::string& detail);

  std::size_t step() const noexcept { return step_; }
  const guidance::LossBreakdown& breakdown() const noexcept { return breakdown_; }

 private:
  std::size_t step_;
  guidance::LossBreakdown breakdown_;
};

/// One pass of the pipeline: g = grad L_base, regularizers on g, L_total,
/// grad L_total (double backprop or finite-difference HVP), optimizer update.
/// Appends the record to state.history and returns it.
StepRecord train_step(TrainState& state, const LossEvaluator& loss,
                      const TrainConfig& config);

StepRecord train_step(TrainState& state, const model::ModelSpec& spec,
                      const tasks::TaskDataset& batch, const TrainConfig& config);

/// Gradient of L_total at the state's parameters, without updating anything.
std::vector<double> total_loss_gradient(const TrainState& state,
                                        const LossEvaluator& loss,
                                        const TrainConfig& config);

/// Fraction of argmax predictions equal to the labels; ties go to the lowest
/// class index.
double evaluate(const ParameterSet& params, const model::ModelSpec& spec,
                const tasks::TaskDataset& dataset);

std::vector<int> predict(const ParameterSet& params, const model::ModelSpec& spec,
                         const tasks::TaskDataset& dataset);

struct TrainingData {
  tasks::TaskDataset train;
  tasks::TaskDataset eval;
  std::optional<tasks::TaskDataset> source;
};

struct RunReport {
  model::ModelSpec spec;
  TrainConfig config;
  std::vector<StepRecord> history;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;        // on the eval split
  double final_train_accuracy = 0.0;
  double tau = 0.0;
  std::size_t prior_observations = 0;
  ParameterSet final_params;
};

/// Warmup (prior and tau estimation) followed by epochs * batches guided
/// steps. With a source task the source gradient is refreshed every step and,
/// unless frozen, folded into the prior.
RunReport train(const model::ModelSpec& spec, const TrainingData& data,
                const TrainConfig& config);

}  // namespace gradguide::trainer
