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
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradguide/autodiff.hpp"

namespace gradguide::tasks {

/// Labeled classification examples, inputs stored row-major.
struct TaskDataset {
  std::string name;
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  std::vector<double> inputs;
  std::vector<int> labels;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * input_dim, input_dim};
  }
  /// Inputs as a constant [size, input_dim] tensor.
  autodiff::Tensor input_tensor() const;
  std::shared_ptr<const std::vector<int>> shared_labels() const;
  std::vector<std::size_t> class_counts() const;
  TaskDataset subset(std::span<const std::size_t> indices) const;

  /// Shape consistency, finite inputs, labels in range.
  void validate() const;
};

struct GaussianTaskSpec {
  std::size_t dim = 2;
  std::size_t class_count = 2;
  std::size_t n_per_class = 100;
  double separation = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
};

/// Class means at separation * (unit vectors at equal angles) in a seeded
/// random 2-plane; each example is its class mean plus N(0, noise_std^2)
/// noise per coordinate.
TaskDataset make_gaussian_task(const GaussianTaskSpec& spec);

/// Class means of `spec` rotated by `rotation_deg` within the same plane.
/// `sample_stream` selects an independent noise stream.
TaskDataset make_rotated_gaussian_task(const GaussianTaskSpec& spec,
                                       double rotation_deg,
                                       std::uint64_t sample_stream);

/// Class means of the generator, [class_count][dim].
std::vector<std::vector<double>> class_means(const GaussianTaskSpec& spec,
                                             double rotation_deg);

struct TaskPairSpec {
  std::size_t dim = 2;
  std::size_t class_count = 2;
  std::size_t n_per_class = 100;
  double separation = 1.0;
  double conflict_angle_deg = 0.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  GaussianTaskSpec base() const {
    return {dim, class_count, n_per_class, separation, noise_std, seed};
  }
};

/// Source task and a target whose class constellation is rotated by the
/// conflict angle. Both share the generating plane; their noise draws are
/// independent.
std::pair<TaskDataset, TaskDataset> make_task_pair(const TaskPairSpec& spec);

struct Split {
  TaskDataset train;
  TaskDataset eval;
};

/// Stratified sample of `shots_per_class` training examples per class. The
/// evaluation set takes round(eval_fraction * remaining) of every class's
/// leftovers (at least one), disjoint from the training set.
Split few_shot_split(const TaskDataset& dataset, std::size_t shots_per_class,
                     double eval_fraction, std::uint64_t seed);

/// One JSON object {"x": [...], "y": label} per line.
TaskDataset load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, const TaskDataset& dataset);

}  // namespace gradguide::tasks
