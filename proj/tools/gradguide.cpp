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

// Command-line front end: run, sweep, compare, check-grads.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gradguide/autodiff.hpp"
#include "gradguide/error.hpp"
#include "gradguide/experiment.hpp"
#include "gradguide/gradcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gradguide;

namespace {

json error_json(const std::exception& e) {
  json j;
  j["status"] = "error";
  j["message"] = e.what();
  if (auto* c = dynamic_cast<const ConfigError*>(&e)) {
    j["kind"] = "config";
    j["field"] = c->field();
  } else if (auto* r = dynamic_cast<const experiment::RunFailure*>(&e)) {
    j["kind"] = "run";
    j["method"] = experiment::method_name(r->method());
    j["seed"] = r->seed();
    j["shots"] = r->shots();
    j["step"] = r->step() ? json(*r->step()) : json(nullptr);
  } else if (auto* f = dynamic_cast<const FormatError*>(&e)) {
    j["kind"] = "format";
    j["line"] = f->line();
  } else {
    j["kind"] = "error";
  }
  return j;
}

int fail(const std::exception& e, const std::optional<fs::path>& out_dir) {
  const json j = error_json(e);
  std::cerr << j.dump() << '\n';
  if (out_dir) {
    std::error_code ec;
    fs::create_directories(*out_dir, ec);
    std::ofstream f(*out_dir / "error.json");
    if (f) f << j.dump(2) << '\n';
  }
  return 1;
}

std::vector<std::size_t> parse_shots(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty() || v < 1) {
      throw ConfigError("shots", "expected a comma-separated list of positive integers");
    }
    out.push_back(static_cast<std::size_t>(v));
    pos = comma + 1;
  }
  return out;
}

void print_gradcheck(const gradcheck::GradCheckReport& report) {
  for (const auto& r : report.results) {
    if (r.skipped) {
      std::printf("%-28s skipped\n", r.component.c_str());
    } else {
      std::printf("%-28s max_rel_error=%.3e tol=%.0e %s\n", r.component.c_str(),
                  r.max_rel_error, r.tolerance, r.passed() ? "ok" : "FAIL");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-guided fine-tuning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string shots = "16,32,64,128,256";
  std::string fault;

  auto* run = app.add_subcommand("run", "train every configured seed");
  run->add_option("--config", config_path)->required();
  run->add_option("--out", out_dir)->required();

  auto* sweep = app.add_subcommand("sweep", "sample-size sweep");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--shots", shots);
  sweep->add_option("--out", out_dir)->required();

  auto* compare = app.add_subcommand("compare", "vanilla vs guided on paired seeds");
  compare->add_option("--config", config_path)->required();
  compare->add_option("--out", out_dir)->required();

  auto* check = app.add_subcommand("check-grads", "finite-difference oracle suite");
  check->add_option("--config", config_path)->required();
  check->add_option("--inject-fault", fault, "scale one op's backward rule (testing)");

  CLI11_PARSE(app, argc, argv);

  std::optional<fs::path> out;
  if (!out_dir.empty()) out = fs::path(out_dir);
  try {
    const auto config = experiment::load_config(config_path);
    if (*run) {
      const auto outcomes = experiment::run_experiment(config, *out);
      std::printf("%zu run(s) written to %s\n", outcomes.size(), out_dir.c_str());
    } else if (*sweep) {
      const auto result = experiment::sweep_samples(config, parse_shots(shots), *out);
      for (const auto& p : result.points) {
        std::printf("shots=%zu mean_accuracy=%.4f std=%.4f\n", p.shots,
                    p.mean_accuracy, p.std_accuracy);
      }
    } else if (*compare) {
      const auto result = experiment::compare_methods(config, *out);
      for (const auto& m : result.means) {
        std::printf("%-13s acc=%.4f stability=%.4f alignment=%.4f loss=%.4f\n",
                    std::string(experiment::method_name(m.method)).c_str(),
                    m.avg_accuracy, m.gradient_stability, m.directional_alignment,
                    m.final_loss);
      }
    } else if (*check) {
      if (!fault.empty()) {
        const auto kind = autodiff::op_from_name(fault);
        if (!kind) throw InvalidArgument("unknown op '" + fault + "'");
        autodiff::testing::inject_backward_fault(kind);
      }
      const auto report = gradcheck::check_grads(config);
      print_gradcheck(report);
      if (!report.ok()) {
        json j{{"status", "error"}, {"kind", "gradcheck"}, {"failed", report.failures()}};
        std::cerr << j.dump() << '\n';
        return 1;
      }
    }
  } catch (const std::exception& e) {
    return fail(e, out);
  }
  return 0;
}
