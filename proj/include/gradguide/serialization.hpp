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

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "gradguide/metrics.hpp"
#include "gradguide/model.hpp"
#include "gradguide/parameters.hpp"
#include "gradguide/tasks.hpp"
#include "gradguide/trainer.hpp"

namespace gradguide {

void to_json(nlohmann::json& j, const ParameterLayout& layout);
void from_json(const nlohmann::json& j, ParameterLayout& layout);

namespace model {
void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);
}  // namespace model

namespace guidance {
void to_json(nlohmann::json& j, const GuidanceConfig& config);
void to_json(nlohmann::json& j, const LossBreakdown& b);
}  // namespace guidance

namespace trainer {
void to_json(nlohmann::json& j, const TrainConfig& config);
void to_json(nlohmann::json& j, const StepRecord& record);
void to_json(nlohmann::json& j, const RunReport& report);
}  // namespace trainer

namespace metrics {
void to_json(nlohmann::json& j, const RunSummary& summary);
}  // namespace metrics

namespace tasks {
void to_json(nlohmann::json& j, const TaskPairSpec& spec);
void to_json(nlohmann::json& j, const GaussianTaskSpec& spec);
}  // namespace tasks

namespace csv {

/// Shortest decimal form that parses back to the same double.
std::string number(double v);
std::string number(const std::optional<double>& v);

inline constexpr std::array<std::string_view, 11> kStepColumns = {
    "step",      "loss_total", "loss_base", "r_dir",       "r_mag",
    "r_grad",    "grad_norm",  "cos_prior", "cos_source",  "update_norm",
    "eval_accuracy",
};

inline constexpr std::array<std::string_view, 7> kComparisonColumns = {
    "method", "seed", "shots", "avg_accuracy", "gradient_stability",
    "directional_alignment", "final_loss",
};

std::string header(std::span<const std::string_view> columns);

/// Per-step CSV (header plus one row per step).
void write_steps(std::ostream& out, const trainer::RunReport& report);

}  // namespace csv

}  // namespace gradguide
