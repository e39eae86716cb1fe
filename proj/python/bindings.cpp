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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradguide/error.hpp"
#include "gradguide/experiment.hpp"
#include "gradguide/gradcheck.hpp"
#include "gradguide/guidance.hpp"
#include "gradguide/metrics.hpp"
#include "gradguide/model.hpp"
#include "gradguide/serialization.hpp"
#include "gradguide/tasks.hpp"
#include "gradguide/trainer.hpp"

namespace py = pybind11;
using namespace gradguide;
using nlohmann::json;

namespace {

GradientVector as_gradient(const std::vector<double>& v) {
  ParameterLayout layout;
  layout.add("g", {v.size()});
  return {layout, Tensor({v.size()}, v)};
}

ParameterSet as_params(const model::ModelSpec& spec, const std::vector<double>& flat) {
  return ParameterSet::from_flat(model::make_layout(spec), flat);
}

experiment::ExperimentConfig config_from(const std::string& text,
                                         const std::filesystem::path& base_dir) {
  return experiment::parse_config(json::parse(text), base_dir);
}

std::string summaries_json(const std::vector<experiment::RunOutcome>& runs) {
  json out = json::array();
  for (const auto& r : runs) {
    json s = r.summary;
    s["method"] = experiment::method_name(r.method);
    s["seed"] = r.seed;
    s["shots"] = r.shots;
    out.push_back(std::move(s));
  }
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "gradient-guided fine-tuning core";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<tasks::TaskDataset>(m, "TaskDataset")
      .def(py::init<>())
      .def_readwrite("name", &tasks::TaskDataset::name)
      .def_readwrite("input_dim", &tasks::TaskDataset::input_dim)
      .def_readwrite("class_count", &tasks::TaskDataset::class_count)
      .def_readwrite("inputs", &tasks::TaskDataset::inputs)
      .def_readwrite("labels", &tasks::TaskDataset::labels)
      .def_readwrite("provenance", &tasks::TaskDataset::provenance)
      .def("__len__", &tasks::TaskDataset::size)
      .def("validate", &tasks::TaskDataset::validate);

  py::class_<model::ModelSpec>(m, "ModelSpec")
      .def(py::init([](const std::string& arch, std::size_t input_dim,
                       std::size_t class_count, std::vector<std::size_t> hidden,
                       std::uint64_t init_seed, double init_scale,
                       std::size_t sequence_length) {
             model::ModelSpec s;
             s.architecture = model::parse_architecture(arch);
             s.input_dim = input_dim;
             s.class_count = class_count;
             s.hidden_dims = std::move(hidden);
             s.init_seed = init_seed;
             s.init_scale = init_scale;
             s.sequence_length = sequence_length;
             s.validate();
             return s;
           }),
           py::arg("architecture"), py::arg("input_dim"), py::arg("class_count"),
           py::arg("hidden_dims") = std::vector<std::size_t>{},
           py::arg("init_seed") = 0, py::arg("init_scale") = 0.1,
           py::arg("sequence_length") = 1)
      .def_property_readonly("architecture", [](const model::ModelSpec& s) {
        return std::string(model::architecture_name(s.architecture));
      })
      .def_readonly("input_dim", &model::ModelSpec::input_dim)
      .def_readonly("class_count", &model::ModelSpec::class_count)
      .def_readonly("hidden_dims", &model::ModelSpec::hidden_dims)
      .def_property_readonly("parameter_count", [](const model::ModelSpec& s) {
        return model::make_layout(s).total();
      });

  m.def("make_gaussian_task",
        [](std::size_t dim, std::size_t k, std::size_t n, double sep, double noise,
           std::uint64_t seed) {
          return tasks::make_gaussian_task({dim, k, n, sep, noise, seed});
        },
        py::arg("dim"), py::arg("class_count"), py::arg("n_per_class"),
        py::arg("separation"), py::arg("noise_std") = 1.0, py::arg("seed") = 0);
  m.def("make_task_pair",
        [](std::size_t dim, std::size_t k, std::size_t n, double sep, double angle,
           double noise, std::uint64_t seed) {
          return tasks::make_task_pair({dim, k, n, sep, angle, noise, seed});
        },
        py::arg("dim"), py::arg("class_count"), py::arg("n_per_class"),
        py::arg("separation"), py::arg("conflict_angle_deg"),
        py::arg("noise_std") = 1.0, py::arg("seed") = 0);
  m.def("few_shot_split",
        [](const tasks::TaskDataset& ds, std::size_t shots, double frac,
           std::uint64_t seed) {
          auto s = tasks::few_shot_split(ds, shots, frac, seed);
          return std::make_pair(std::move(s.train), std::move(s.eval));
        },
        py::arg("dataset"), py::arg("shots"), py::arg("eval_fraction") = 1.0,
        py::arg("seed") = 0);
  m.def("load_jsonl", &tasks::load_jsonl);
  m.def("save_jsonl", &tasks::save_jsonl);

  m.def("init_model", [](const model::ModelSpec& s) { return model::init_model(s).flatten(); });
  m.def("predict", [](const model::ModelSpec& s, const std::vector<double>& p,
                      const tasks::TaskDataset& ds) {
    return trainer::predict(as_params(s, p), s, ds);
  });
  m.def("evaluate", [](const model::ModelSpec& s, const std::vector<double>& p,
                       const tasks::TaskDataset& ds) {
    return trainer::evaluate(as_params(s, p), s, ds);
  });
  m.def("base_loss_and_gradient",
        [](const model::ModelSpec& s, const std::vector<double>& p,
           const tasks::TaskDataset& ds) {
          autodiff::Tape tape;
          const ParameterSet leaves = as_params(s, p).attach(tape);
          const Tensor loss = guidance::base_loss(leaves, s, ds);
          const GradientVector g = backward(loss, leaves, false);
          return std::make_pair(loss.item(),
                                std::vector<double>(g.values().begin(), g.values().end()));
        });
  m.def("save_checkpoint", [](const std::string& path, const model::ModelSpec& s,
                              const std::vector<double>& p) {
    model::save_checkpoint(path, s, as_params(s, p));
  });
  m.def("load_checkpoint", [](const std::string& path) {
    auto c = model::load_checkpoint(path);
    return std::make_pair(c.spec, c.params.flatten());
  });

  m.def("direction_regularizer",
        [](const std::vector<double>& g, const std::vector<double>& d, double l1) {
          guidance::DirectionPrior prior{d, 1, 0};
          return guidance::direction_regularizer(as_gradient(g), prior, l1).value.item();
        },
        py::arg("g"), py::arg("prior"), py::arg("lambda1"));
  m.def("magnitude_regularizer",
        [](const std::vector<double>& g, double tau, double l2) {
          return guidance::magnitude_regularizer(as_gradient(g), tau, l2).item();
        },
        py::arg("g"), py::arg("tau"), py::arg("lambda2"));
  m.def("contrast_loss",
        [](const std::vector<double>& gt, const std::vector<double>& gs, double l3) {
          return guidance::contrast_loss(as_gradient(gt), gs, l3).item();
        },
        py::arg("g_target"), py::arg("g_source"), py::arg("lambda3"));
  m.def("gradient_stability", [](const std::vector<double>& norms) {
    return metrics::gradient_stability(norms);
  });
  m.def("directional_alignment", [](const std::vector<std::vector<double>>& g,
                                    const std::vector<std::vector<double>>& d) {
    return metrics::directional_alignment(g, d);
  });

  // Experiment entry points take the config document as a JSON string and
  // return JSON strings; the Python wrapper decodes them.
  m.def("_validate_config", [](const std::string& cfg, const std::filesystem::path& base) {
    return experiment::config_to_json(config_from(cfg, base)).dump();
  });
  m.def("_train", [](const std::string& cfg, const std::filesystem::path& base, const std::string& method,
                     std::uint64_t seed, std::optional<std::size_t> shots) {
    const auto c = config_from(cfg, base);
    auto out = experiment::execute_run(c, experiment::parse_method(method), seed,
                                       shots.value_or(c.shots));
    json j = out.report;
    j["summary"] = out.summary;
    return j.dump();
  });
  m.def("_run_experiment", [](const std::string& cfg, const std::filesystem::path& base, const std::filesystem::path& out) {
    py::gil_scoped_release release;
    return summaries_json(experiment::run_experiment(config_from(cfg, base), out));
  });
  m.def("_compare_methods", [](const std::string& cfg, const std::filesystem::path& base, const std::filesystem::path& out) {
    py::gil_scoped_release release;
    return summaries_json(experiment::compare_methods(config_from(cfg, base), out).runs);
  });
  m.def("_sweep_samples", [](const std::string& cfg, const std::filesystem::path& base, const std::vector<std::size_t>& shots,
                             const std::filesystem::path& out) {
    py::gil_scoped_release release;
    return summaries_json(experiment::sweep_samples(config_from(cfg, base), shots, out).runs);
  });
  m.def("_check_grads", [](const std::string& cfg, const std::filesystem::path& base) {
    const auto report = gradcheck::check_grads(config_from(cfg, base));
    std::vector<py::dict> out;
    for (const auto& r : report.results) {
      py::dict d;
      d["component"] = r.component;
      d["max_rel_error"] = r.max_rel_error;
      d["tolerance"] = r.tolerance;
      d["skipped"] = r.skipped;
      d["passed"] = r.passed();
      out.push_back(std::move(d));
    }
    return out;
  });
  m.def("validate_artifacts", &experiment::validate_artifacts);
}
