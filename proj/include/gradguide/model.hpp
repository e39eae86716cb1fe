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
#include <string>
#include <string_view>
#include <vector>

#include "gradguide/parameters.hpp"

namespace gradguide::model {

enum class Architecture { logistic, mlp, tiny_attention };

std::string_view architecture_name(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// Toy classifier description. For tiny_attention the input of width
/// input_dim is read as `sequence_length` chunks of input_dim/sequence_length
/// features, and hidden_dims holds the single attention width.
struct ModelSpec {
  Architecture architecture = Architecture::logistic;
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims;
  std::size_t class_count = 2;
  std::uint64_t init_seed = 0;
  double init_scale = 0.1;
  std::size_t sequence_length = 1;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Named parameter shapes for `spec`, in a fixed order.
ParameterLayout make_layout(const ModelSpec& spec);

/// Weights ~ uniform(-init_scale, init_scale) from the seeded generator,
/// biases zero.
ParameterSet init_model(const ModelSpec& spec);

/// Pre-softmax logits [batch, class_count] for inputs x [batch, input_dim].
/// Hidden layers of the mlp use tanh.
Tensor forward(const ParameterSet& params, const ModelSpec& spec,
               const Tensor& x);

struct Checkpoint {
  ModelSpec spec;
  ParameterSet params;
};

/// JSON document {"spec", "layout", "values"}; doubles round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ParameterSet& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gradguide::model
