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


#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gradguide/error.hpp"
#include "gradguide/experiment.hpp"
#include "gradguide/gradcheck.hpp"
#include "json.hpp"

using namespace gradguide;
using namespace gradguide::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_doc() {
  return json::parse(R"({
    "model": {"architecture": "logistic", "input_dim": 2, "class_count": 3},
    "task": {"kind": "pair", "dim": 2, "class_count": 3, "n_per_class": 60,
             "separation": 1.5, "conflict_angle_deg": 30, "noise_std": 1.0},
    "shots": 8,
    "eval_fraction": 0.5,
    "train": {"learning_rate": 0.1, "epochs": 15, "warmup_steps": 3,
              "guidance": {"lambda1": 0.1, "lambda2": 0.1, "lambda3": 0.1}},
    "method": "guided-exact",
    "seeds": [0]
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gradguide_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string config_error_field(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

constexpr const char* kStepHeader =
    "step,loss_total,loss_base,r_dir,r_mag,r_grad,grad_norm,cos_prior,"
    "cos_source,update_norm,eval_accuracy";
constexpr const char* kComparisonHeader =
    "method,seed,shots,avg_accuracy,gradient_stability,directional_alignment,"
    "final_loss";

}  // namespace

TEST_CASE("config errors name the field") {
  json d = small_doc();
  d["train"]["learning_rate"] = -0.1;
  CHECK(config_error_field(d) == "train.learning_rate");
  d = small_doc();
  d["train"]["guidance"]["lambda2"] = -1;
  CHECK(config_error_field(d) == "train.guidance.lambda2");
  d = small_doc();
  d["train"]["guidance"]["mode"] = "symbolic";
  CHECK(config_error_field(d) == "train.guidance.mode");
  d = small_doc();
  d["method"] = "magic";
  CHECK(config_error_field(d) == "method");
  d = small_doc();
  d["shots"] = 0;
  CHECK(config_error_field(d) == "shots");
  d = small_doc();
  d["model"]["input_dim"] = 5;
  CHECK(config_error_field(d) != "<none>");
  d = small_doc();
  d["train"]["guidance"]["dynamic_strength"] = true;
  CHECK(config_error_field(d) == "train.guidance.dynamic_strength");
  d = small_doc();
  d["bogus"] = 1;
  CHECK(config_error_field(d) == "bogus");
  CHECK(config_error_field(small_doc()) == "<none>");
}

TEST_CASE("config round-trips through json") {
  const ExperimentConfig c = parse_config(small_doc());
  const ExperimentConfig again = parse_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
}

TEST_CASE("zero epochs still produce artifacts") {
  json d = small_doc();
  d["train"]["epochs"] = 0;
  const fs::path out = scratch("zero");
  const auto runs = run_experiment(parse_config(d), out);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].report.history.empty());
  CHECK(runs[0].summary.avg_accuracy == runs[0].report.initial_accuracy);
  CHECK(first_line(out / "guided-exact_seed0.csv") == kStepHeader);
  CHECK(slurp(out / "guided-exact_seed0.csv") == std::string(kStepHeader) + "\n");
  CHECK(validate_artifacts(out).empty());
  fs::remove_all(out);
}

TEST_CASE("multi-seed run writes one report per seed") {
  json d = small_doc();
  d["seeds"] = {0, 1, 2};
  const fs::path out = scratch("seeds");
  const auto runs = run_experiment(parse_config(d), out);
  CHECK(runs.size() == 3);
  for (int s = 0; s < 3; ++s) {
    const std::string stem = "guided-exact_seed" + std::to_string(s);
    CHECK(fs::exists(out / (stem + ".csv")));
    const json rep = json::parse(slurp(out / (stem + ".json")));
    CHECK(rep.contains("records"));
    CHECK(rep["records"].size() == runs[s].report.history.size());
  }
  CHECK(first_line(out / "summary.csv") == kComparisonHeader);
  std::ifstream in(out / "summary.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  CHECK(validate_artifacts(out).empty());

  // Reruns are byte-identical.
  const fs::path out2 = scratch("seeds2");
  run_experiment(parse_config(d), out2);
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() == ".csv") {
      CHECK(slurp(e.path()) == slurp(out2 / e.path().filename()));
    }
  }
  fs::remove_all(out);
  fs::remove_all(out2);
}

TEST_CASE("single-point sweep matches a plain run") {
  json d = small_doc();
  d["seeds"] = {3, 4};
  const ExperimentConfig c = parse_config(d);
  const SweepResult sw = sweep_samples(c, {8}, {});
  const auto runs = run_experiment(c, {});
  REQUIRE(sw.points.size() == 1);
  REQUIRE(sw.runs.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(sw.runs[i].report.final_params.flatten() ==
          runs[i].report.final_params.flatten());
    CHECK(sw.runs[i].summary.avg_accuracy == runs[i].summary.avg_accuracy);
  }
  CHECK(sw.points[0].mean_accuracy ==
        doctest::Approx((runs[0].summary.avg_accuracy + runs[1].summary.avg_accuracy) / 2));
}

TEST_CASE("sweep rejects bad shot lists") {
  const ExperimentConfig c = parse_config(small_doc());
  auto field = [&](const std::vector<std::size_t>& shots) {
    try {
      sweep_samples(c, shots, {});
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field({}) == "shots");
  CHECK(field({8, 4}) == "shots");
  CHECK(field({8, 500}) == "shots");
}

TEST_CASE("comparison with zero weights gives identical rows") {
  json d = small_doc();
  d["train"]["guidance"] = {{"lambda1", 0}, {"lambda2", 0}, {"lambda3", 0}};
  d["seeds"] = {0, 1};
  const fs::path out = scratch("compare");
  const ComparisonResult cr = compare_methods(parse_config(d), out);
  REQUIRE(cr.runs.size() == 6);
  REQUIRE(cr.means.size() == 3);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& v = cr.runs[s].report;
    for (std::size_t m = 1; m < 3; ++m) {
      const auto& g = cr.runs[m * 2 + s].report;
      CHECK(g.final_params.flatten() == v.final_params.flatten());
      CHECK(g.final_accuracy == v.final_accuracy);
    }
  }
  CHECK(first_line(out / "comparison.csv") == kComparisonHeader);
  CHECK(validate_artifacts(out).empty());
  fs::remove_all(out);
}

TEST_CASE("artifact validation catches damage") {
  const fs::path out = scratch("damage");
  run_experiment(parse_config(small_doc()), out);
  {
    std::ofstream f(out / "summary.csv", std::ios::app);
    f << "guided-exact,9,8\n";
  }
  CHECK_FALSE(validate_artifacts(out).empty());
  fs::remove_all(out);
}

TEST_CASE("gradient checks") {
  json d = small_doc();
  SUBCASE("all weights zero skips the second-order parts") {
    d["train"]["guidance"] = {{"lambda1", 0}, {"lambda2", 0}, {"lambda3", 0}};
    const auto rep = gradcheck::check_grads(parse_config(d));
    CHECK(rep.ok());
    std::size_t skipped = 0;
    for (const auto& r : rep.results) skipped += r.skipped;
    CHECK(skipped == 2);
  }
  SUBCASE("guided model passes") {
    const auto rep = gradcheck::check_grads(parse_config(d));
    CHECK(rep.ok());
    CHECK(rep.failures().empty());
  }
  SUBCASE("large models are refused") {
    d["model"] = {{"architecture", "mlp"}, {"input_dim", 2}, {"class_count", 3},
                  {"hidden_dims", {64, 64}}};
    CHECK_THROWS_AS(gradcheck::check_grads(parse_config(d)), InvalidArgument);
  }
}
