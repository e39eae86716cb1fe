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

#include "gradguide/serialization.hpp"

#include <charconv>
#include <cmath>

namespace gradguide {

void to_json(nlohmann::json& j, const ParameterLayout& layout) {
  j = nlohmann::json::array();
  for (const auto& slot : layout.slots()) {
    j.push_back({{"name", slot.name}, {"shape", slot.shape}, {"offset", slot.offset}});
  }
}

void from_json(const nlohmann::json& j, ParameterLayout& layout) {
  layout = ParameterLayout{};
  for (const auto& item : j) {
    layout.add(item.at("name").get<std::string>(),
               item.at("shape").get<autodiff::Shape>());
    if (layout.slots().back().offset != item.at("offset").get<std::size_t>()) {
      throw nlohmann::json::other_error::create(
          501, "layout offsets are not contiguous", &j);
    }
  }
}

namespace model {

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  j = {{"architecture", architecture_name(spec.architecture)},
       {"input_dim", spec.input_dim},
       {"hidden_dims", spec.hidden_dims},
       {"class_count", spec.class_count},
       {"init_seed", spec.init_seed},
       {"init_scale", spec.init_scale},
       {"sequence_length", spec.sequence_length}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  spec.architecture = parse_architecture(j.at("architecture").get<std::string>());
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.hidden_dims = j.value("hidden_dims", std::vector<std::size_t>{});
  spec.class_count = j.at("class_count").get<std::size_t>();
  spec.init_seed = j.value("init_seed", std::uint64_t{0});
  spec.init_scale = j.value("init_scale", 0.1);
  spec.sequence_length = j.value("sequence_length", std::size_t{1});
}

}  // namespace model

namespace {
nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace

namespace guidance {

void to_json(nlohmann::json& j, const GuidanceConfig& c) {
  j = {{"lambda1", c.lambda1},
       {"lambda2", c.lambda2},
       {"lambda3", c.lambda3},
       {"tau", c.tau ? nlohmann::json(*c.tau) : nlohmann::json("auto")},
       {"prior_decay", c.prior_decay},
       {"mode", mode_name(c.mode)},
       {"norm_guard", c.norm_guard}};
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"loss_total", b.total},        {"loss_base", b.base},
       {"r_dir", b.dir},               {"r_mag", b.mag},
       {"r_grad", b.contrast},         {"grad_norm", b.grad_norm},
       {"cos_prior", optional_number(b.cos_prior)},
       {"cos_source", optional_number(b.cos_source)},
       {"guarded", b.guarded}};
}

}  // namespace guidance

namespace trainer {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"optimizer", optimizer_name(c.optimizer)},
       {"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size ? nlohmann::json(*c.batch_size)
                                   : nlohmann::json("full")},
       {"seed", c.seed},
       {"guidance", c.guidance},
       {"warmup_steps", c.warmup_steps},
       {"gradient_clip", c.gradient_clip},
       {"eval_interval", c.eval_interval},
       {"freeze_prior", c.freeze_prior}};
}

void to_json(nlohmann::json& j, const StepRecord& r) {
  j = r.loss;
  j["step"] = r.step;
  j["update_norm"] = r.update_norm;
  j["wall_time_s"] = r.wall_time_s;
  j["eval_accuracy"] = optional_number(r.eval_accuracy);
}

void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"config", {{"model", r.spec}, {"train", r.config}}},
       {"records", r.history},
       {"final",
        {{"initial_accuracy", r.initial_accuracy},
         {"final_accuracy", r.final_accuracy},
         {"final_train_accuracy", r.final_train_accuracy},
         {"tau", r.tau},
         {"prior_observations", r.prior_observations},
         {"steps", r.history.size()},
         {"parameters", r.final_params.flatten()}}}};
}

}  // namespace trainer

namespace metrics {

void to_json(nlohmann::json& j, const RunSummary& s) {
  j = {{"avg_accuracy", s.avg_accuracy},
       {"gradient_stability", s.gradient_stability},
       {"directional_alignment", s.directional_alignment},
       {"final_loss", s.final_loss},
       {"steps_to_threshold", s.steps_to_threshold
                                  ? nlohmann::json(*s.steps_to_threshold)
                                  : nlohmann::json(nullptr)},
       {"stability_degenerate", s.stability_degenerate},
       {"alignment_missing", s.alignment_missing}};
}

}  // namespace metrics

namespace tasks {

void to_json(nlohmann::json& j, const TaskPairSpec& s) {
  j = {{"dim", s.dim},
       {"class_count", s.class_count},
       {"n_per_class", s.n_per_class},
       {"separation", s.separation},
       {"conflict_angle_deg", s.conflict_angle_deg},
       {"noise_std", s.noise_std},
       {"seed", s.seed}};
}

void to_json(nlohmann::json& j, const GaussianTaskSpec& s) {
  j = {{"dim", s.dim},
       {"class_count", s.class_count},
       {"n_per_class", s.n_per_class},
       {"separation", s.separation},
       {"noise_std", s.noise_std},
       {"seed", s.seed}};
}

}  // namespace tasks

namespace csv {

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string number(const std::optional<double>& v) {
  return v ? number(*v) : std::string();
}

std::string header(std::span<const std::string_view> columns) {
  std::string line;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i > 0) line += ',';
    line += columns[i];
  }
  return line;
}

void write_steps(std::ostream& out, const trainer::RunReport& report) {
  out << header(kStepColumns) << '\n';
  for (const auto& r : report.history) {
    const auto& b = r.loss;
    out << r.step << ',' << number(b.total) << ',' << number(b.base) << ','
        << number(b.dir) << ',' << number(b.mag) << ',' << number(b.contrast)
        << ',' << number(b.grad_norm) << ',' << number(b.cos_prior) << ','
        << number(b.cos_source) << ',' << number(r.update_norm) << ','
        << number(r.eval_accuracy) << '\n';
  }
}

}  // namespace csv

}  // namespace gradguide
