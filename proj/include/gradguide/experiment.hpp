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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gradguide/metrics.hpp"
#include "gradguide/model.hpp"
#include "gradguide/tasks.hpp"
#include "gradguide/trainer.hpp"

namespace gradguide::experiment {

enum class Method { vanilla, guided_exact, guided_fd };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct FileTask {
  std::filesystem::path path;
  std::optional<std::filesystem::path> source_path;
};

/// Task source for a run. Generated tasks take their seed from the run seed.
using TaskSource =
    std::variant<tasks::GaussianTaskSpec, tasks::TaskPairSpec, FileTask>;

struct ExperimentConfig {
  model::ModelSpec model;
  TaskSource task;
  std::size_t shots = 16;
  /// Shots per class drawn from the source task; defaults to `shots`.
  std::optional<std::size_t> source_shots;
  double eval_fraction = 1.0;
  trainer::TrainConfig train;
  Method method = Method::guided_exact;
  std::vector<Method> methods = {Method::vanilla, Method::guided_exact,
                                 Method::guided_fd};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<std::size_t> shot_list = {16, 32, 64, 128, 256};
  std::optional<double> loss_threshold;
  /// Worker threads for independent runs; 0 picks the hardware count.
  std::size_t threads = 0;
};

/// Parses and validates a config document. Errors are ConfigError naming
/// the offending field. Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Training configuration with the method's weights and mode applied
/// (vanilla forces all weights to zero).
trainer::TrainConfig method_config(const trainer::TrainConfig& base, Method method);

/// Few-shot split (and source task) for one seed.
trainer::TrainingData make_data(const ExperimentConfig& config,
                                std::uint64_t seed, std::size_t shots);

struct RunOutcome {
  Method method = Method::guided_exact;
  std::uint64_t seed = 0;
  std::size_t shots = 0;
  trainer::RunReport report;
  /// For an empty history only avg_accuracy is meaningful (the initial
  /// accuracy); both degenerate flags are set.
  metrics::RunSummary summary;
};

/// One training run: per-seed model init, data and batching.
RunOutcome execute_run(const ExperimentConfig& config, Method method,
                       std::uint64_t seed, std::size_t shots);

/// Run failure tied to a work unit.
class RunFailure : public Error {
 public:
  RunFailure(Method method, std::uint64_t seed, std::size_t shots,
             std::optional<std::size_t> step, const std::string& message);

  Method method() const noexcept { return method_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t shots() const noexcept { return shots_; }
  std::optional<std::size_t> step() const noexcept { return step_; }

 private:
  Method method_;
  std::uint64_t seed_;
  std::size_t shots_;
  std::optional<std::size_t> step_;
};

/// Runs `config.method` for every seed, writing <method>_seed<s>.csv/.json
/// and summary.csv under `out_dir`.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path& out_dir);

struct SweepPoint {
  std::size_t shots = 0;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_stability = 0.0;
  double mean_alignment = 0.0;
};

struct SweepResult {
  std::vector<RunOutcome> runs;
  std::vector<SweepPoint> points;
};

/// Full run for every (shots, seed); writes sweep.csv and sweep_summary.csv
/// when `out_dir` is nonempty.
SweepResult sweep_samples(const ExperimentConfig& config,
                          const std::vector<std::size_t>& shot_list,
                          const std::filesystem::path& out_dir);

struct MethodMean {
  Method method = Method::vanilla;
  std::size_t runs = 0;
  double avg_accuracy = 0.0;
  double gradient_stability = 0.0;
  double directional_alignment = 0.0;
  double final_loss = 0.0;
};

struct ComparisonResult {
  std::vector<RunOutcome> runs;  // method-major, then seed
  std::vector<MethodMean> means;
};

/// Every configured method on identical seeds and splits; writes
/// comparison.csv, comparison_mean.csv and per-run step CSVs when `out_dir`
/// is nonempty.
ComparisonResult compare_methods(const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir);

/// Checks that every CSV under `dir` has a known header and rectangular rows
/// and every JSON report parses with its required keys. Returns the problems.
std::vector<std::string> validate_artifacts(const std::filesystem::path& dir);

}  // namespace gradguide::experiment
