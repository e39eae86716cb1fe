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

#include "gradguide/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <atomic>

#include "gradguide/error.hpp"
#include "gradguide/serialization.hpp"

namespace gradguide::experiment {

using nlohmann::json;

std::string_view method_name(Method m) {
  switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::guided_exact: return "guided-exact";
    case Method::guided_fd: return "guided-fd";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "vanilla") return Method::vanilla;
  if (name == "guided-exact") return Method::guided_exact;
  if (name == "guided-fd") return Method::guided_fd;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

// --- Config parsing --------------------------------------------------------

namespace {

std::string join_path(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  }
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(join_path(prefix, key), "unknown field");
    }
  }
}

double number(const json& obj, std::string_view key, const std::string& prefix,
              std::optional<double> fallback = std::nullopt) {
  const std::string name = join_path(prefix, key);
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(name, "missing required field");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(name, "expected a number");
  return v.get<double>();
}

// Documents built in code store small integers as signed.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::uint64_t count(const json& obj, std::string_view key,
                    const std::string& prefix,
                    std::optional<std::uint64_t> fallback = std::nullopt) {
  const std::string name = join_path(prefix, key);
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(name, "missing required field");
  }
  const json& v = obj.at(key);
  if (!is_count(v)) throw ConfigError(name, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<std::uint64_t> count_list(const json& obj, std::string_view key,
                                      const std::string& prefix) {
  const std::string name = join_path(prefix, key);
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(name, "expected an array");
  std::vector<std::uint64_t> out;
  for (const auto& item : v) {
    if (!is_count(item)) {
      throw ConfigError(name, "expected non-negative integers");
    }
    out.push_back(item.get<std::uint64_t>());
  }
  return out;
}

std::string text(const json& obj, std::string_view key, const std::string& prefix,
                 std::optional<std::string> fallback = std::nullopt) {
  const std::string name = join_path(prefix, key);
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(name, "missing required field");
  }
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(name, "expected a string");
  return v.get<std::string>();
}

bool flag(const json& obj, std::string_view key, const std::string& prefix,
          bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(join_path(prefix, key), "expected a boolean");
  return v.get<bool>();
}

// Runs `fn`, converting InvalidArgument into a ConfigError on `field`.
template <typename F>
void validated(const std::string& field, F&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(field, e.what());
  }
}

// Whole-object validation. Messages read "<scope>: <key> ...", so the key
// named in the message refines the field when it is one of `keys`.
template <typename F>
void validated(const std::string& prefix, std::initializer_list<std::string_view> keys,
               F&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    const std::string_view msg = e.what();
    std::string field = prefix;
    if (const auto colon = msg.find(": "); colon != std::string_view::npos) {
      std::string_view rest = msg.substr(colon + 2);
      rest = rest.substr(0, rest.find(' '));
      if (std::find(keys.begin(), keys.end(), rest) != keys.end()) {
        field = join_path(prefix, rest);
      }
    }
    throw ConfigError(field, e.what());
  }
}

model::ModelSpec parse_model(const json& j) {
  const std::string p = "model";
  reject_unknown(j, p,
                 {"architecture", "input_dim", "hidden_dims", "class_count",
                  "init_seed", "init_scale", "sequence_length"});
  model::ModelSpec spec;
  validated(p + ".architecture", [&] {
    spec.architecture = model::parse_architecture(text(j, "architecture", p));
  });
  spec.input_dim = count(j, "input_dim", p);
  if (j.contains("hidden_dims")) {
    for (auto h : count_list(j, "hidden_dims", p)) spec.hidden_dims.push_back(h);
  }
  spec.class_count = count(j, "class_count", p);
  spec.init_seed = count(j, "init_seed", p, 0);
  spec.init_scale = number(j, "init_scale", p, 0.1);
  spec.sequence_length = count(j, "sequence_length", p, 1);
  validated(p, {"class_count", "input_dim", "init_scale"}, [&] { spec.validate(); });
  return spec;
}

TaskSource parse_task(const json& j, const std::filesystem::path& base_dir) {
  const std::string p = "task";
  if (!j.is_object()) throw ConfigError(p, "expected an object");
  const std::string kind = text(j, "kind", p);
  if (kind == "gaussian") {
    reject_unknown(j, p, {"kind", "dim", "class_count", "n_per_class",
                          "separation", "noise_std"});
    tasks::GaussianTaskSpec s;
    s.dim = count(j, "dim", p);
    s.class_count = count(j, "class_count", p);
    s.n_per_class = count(j, "n_per_class", p);
    s.separation = number(j, "separation", p);
    s.noise_std = number(j, "noise_std", p, 1.0);
    validated(p, [&] {
      tasks::TaskPairSpec check{s.dim, s.class_count, s.n_per_class,
                                s.separation, 0.0, s.noise_std, 0};
      check.validate();
    });
    return s;
  }
  if (kind == "pair") {
    reject_unknown(j, p, {"kind", "dim", "class_count", "n_per_class",
                          "separation", "conflict_angle_deg", "noise_std"});
    tasks::TaskPairSpec s;
    s.dim = count(j, "dim", p);
    s.class_count = count(j, "class_count", p);
    s.n_per_class = count(j, "n_per_class", p);
    s.separation = number(j, "separation", p);
    s.conflict_angle_deg = number(j, "conflict_angle_deg", p);
    s.noise_std = number(j, "noise_std", p, 1.0);
    validated(p, [&] { s.validate(); });
    return s;
  }
  if (kind == "files") {
    reject_unknown(j, p, {"kind", "path", "source_path"});
    auto resolve = [&](const std::string& s) {
      std::filesystem::path path(s);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    FileTask f{resolve(text(j, "path", p)), std::nullopt};
    if (j.contains("source_path")) f.source_path = resolve(text(j, "source_path", p));
    return f;
  }
  throw ConfigError(p + ".kind", "expected \"gaussian\", \"pair\" or \"files\"");
}

guidance::GuidanceConfig parse_guidance(const json& j) {
  const std::string p = "train.guidance";
  reject_unknown(j, p, {"lambda1", "lambda2", "lambda3", "tau", "prior_decay",
                        "mode", "norm_guard", "dynamic_strength"});
  guidance::GuidanceConfig g;
  g.lambda1 = number(j, "lambda1", p, 0.1);
  g.lambda2 = number(j, "lambda2", p, 0.1);
  g.lambda3 = number(j, "lambda3", p, 0.1);
  if (j.contains("tau")) {
    const json& t = j.at("tau");
    if (t.is_string() && t.get<std::string>() == "auto") {
      g.tau.reset();
    } else if (t.is_number()) {
      g.tau = t.get<double>();
    } else {
      throw ConfigError(p + ".tau", "expected a number or \"auto\"");
    }
  }
  g.prior_decay = number(j, "prior_decay", p, 0.9);
  validated(p + ".mode", [&] {
    g.mode = guidance::parse_mode(text(j, "mode", p, std::string("exact")));
  });
  g.norm_guard = number(j, "norm_guard", p, 1e-12);
  g.dynamic_strength = flag(j, "dynamic_strength", p, false);
  validated(p, {"lambda1", "lambda2", "lambda3", "tau", "prior_decay", "norm_guard",
                "dynamic_strength"},
            [&] { g.validate(); });
  return g;
}

trainer::TrainConfig parse_train(const json& j) {
  const std::string p = "train";
  reject_unknown(j, p,
                 {"optimizer", "learning_rate", "adam_beta1", "adam_beta2",
                  "adam_eps", "epochs", "batch_size", "guidance", "warmup_steps",
                  "gradient_clip", "eval_interval", "freeze_prior"});
  trainer::TrainConfig c;
  validated(p + ".optimizer", [&] {
    c.optimizer = trainer::parse_optimizer(text(j, "optimizer", p, std::string("sgd")));
  });
  c.learning_rate = number(j, "learning_rate", p, 0.1);
  c.adam_beta1 = number(j, "adam_beta1", p, 0.9);
  c.adam_beta2 = number(j, "adam_beta2", p, 0.999);
  c.adam_eps = number(j, "adam_eps", p, 1e-8);
  c.epochs = count(j, "epochs", p, 100);
  if (j.contains("batch_size")) {
    const json& b = j.at("batch_size");
    if (b.is_string() && b.get<std::string>() == "full") {
      c.batch_size.reset();
    } else if (is_count(b) && b.get<std::uint64_t>() >= 1) {
      c.batch_size = b.get<std::size_t>();
    } else {
      throw ConfigError(p + ".batch_size", "expected a positive integer or \"full\"");
    }
  }
  if (j.contains("guidance")) c.guidance = parse_guidance(j.at("guidance"));
  c.warmup_steps = count(j, "warmup_steps", p, 10);
  c.gradient_clip = number(j, "gradient_clip", p, 0.0);
  c.eval_interval = count(j, "eval_interval", p, 10);
  c.freeze_prior = flag(j, "freeze_prior", p, false);
  validated(p, {"learning_rate", "adam_eps", "batch_size", "gradient_clip"},
            [&] { c.validate(); });
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& doc,
                              const std::filesystem::path& base_dir) {
  reject_unknown(doc, "",
                 {"model", "task", "shots", "source_shots", "eval_fraction",
                  "train", "method", "methods", "seeds", "shot_list",
                  "loss_threshold", "threads"});
  if (!doc.contains("model")) throw ConfigError("model", "missing required field");
  if (!doc.contains("task")) throw ConfigError("task", "missing required field");

  ExperimentConfig c;
  c.model = parse_model(doc.at("model"));
  c.task = parse_task(doc.at("task"), base_dir);
  c.shots = count(doc, "shots", "", 16);
  if (c.shots < 1) throw ConfigError("shots", "must be >= 1");
  if (doc.contains("source_shots")) {
    c.source_shots = count(doc, "source_shots", "");
    if (*c.source_shots < 1) throw ConfigError("source_shots", "must be >= 1");
  }
  c.eval_fraction = number(doc, "eval_fraction", "", 1.0);
  if (!(c.eval_fraction > 0.0 && c.eval_fraction <= 1.0)) {
    throw ConfigError("eval_fraction", "must lie in (0, 1]");
  }
  if (doc.contains("train")) c.train = parse_train(doc.at("train"));
  validated("method", [&] {
    c.method = parse_method(text(doc, "method", "", std::string("guided-exact")));
  });
  if (doc.contains("methods")) {
    const json& m = doc.at("methods");
    if (!m.is_array() || m.empty()) {
      throw ConfigError("methods", "expected a nonempty array of method names");
    }
    c.methods.clear();
    for (const auto& item : m) {
      if (!item.is_string()) throw ConfigError("methods", "expected strings");
      validated("methods", [&] { c.methods.push_back(parse_method(item.get<std::string>())); });
    }
  }
  if (doc.contains("seeds")) c.seeds = count_list(doc, "seeds", "");
  if (c.seeds.empty()) throw ConfigError("seeds", "must be nonempty");
  if (doc.contains("shot_list")) {
    c.shot_list.clear();
    for (auto s : count_list(doc, "shot_list", "")) c.shot_list.push_back(s);
  }
  if (doc.contains("loss_threshold")) {
    c.loss_threshold = number(doc, "loss_threshold", "");
  }
  c.threads = count(doc, "threads", "", 0);

  // Cross-field consistency.
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (!std::is_same_v<T, FileTask>) {
          if (t.dim != c.model.input_dim) {
            throw ConfigError("model.input_dim", "must equal task.dim (" +
                                                     std::to_string(t.dim) + ")");
          }
          if (t.class_count != c.model.class_count) {
            throw ConfigError("model.class_count",
                              "must equal task.class_count (" +
                                  std::to_string(t.class_count) + ")");
          }
        }
      },
      c.task);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = c.model;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, tasks::GaussianTaskSpec>) {
          j["task"] = t;
          j["task"].erase("seed");
          j["task"]["kind"] = "gaussian";
        } else if constexpr (std::is_same_v<T, tasks::TaskPairSpec>) {
          j["task"] = t;
          j["task"].erase("seed");
          j["task"]["kind"] = "pair";
        } else {
          j["task"] = {{"kind", "files"}, {"path", t.path.string()}};
          if (t.source_path) j["task"]["source_path"] = t.source_path->string();
        }
      },
      c.task);
  j["shots"] = c.shots;
  if (c.source_shots) j["source_shots"] = *c.source_shots;
  j["eval_fraction"] = c.eval_fraction;
  j["train"] = c.train;
  j["train"].erase("seed");
  j["method"] = method_name(c.method);
  j["methods"] = json::array();
  for (Method m : c.methods) j["methods"].push_back(method_name(m));
  j["seeds"] = c.seeds;
  j["shot_list"] = c.shot_list;
  if (c.loss_threshold) j["loss_threshold"] = *c.loss_threshold;
  return j;
}

// --- Runs --------------------------------------------------------------------

trainer::TrainConfig method_config(const trainer::TrainConfig& base, Method method) {
  trainer::TrainConfig c = base;
  switch (method) {
    case Method::vanilla:
      c.guidance.lambda1 = 0.0;
      c.guidance.lambda2 = 0.0;
      c.guidance.lambda3 = 0.0;
      break;
    case Method::guided_exact:
      c.guidance.mode = guidance::GradientMode::exact;
      break;
    case Method::guided_fd:
      c.guidance.mode = guidance::GradientMode::fd_hvp;
      break;
  }
  return c;
}

trainer::TrainingData make_data(const ExperimentConfig& config,
                                std::uint64_t seed, std::size_t shots) {
  const std::size_t source_shots = config.source_shots.value_or(shots);
  return std::visit(
      [&](const auto& t) -> trainer::TrainingData {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, tasks::GaussianTaskSpec>) {
          tasks::GaussianTaskSpec s = t;
          s.seed = seed;
          auto split = tasks::few_shot_split(tasks::make_gaussian_task(s), shots,
                                             config.eval_fraction, seed);
          return {std::move(split.train), std::move(split.eval), std::nullopt};
        } else if constexpr (std::is_same_v<T, tasks::TaskPairSpec>) {
          tasks::TaskPairSpec s = t;
          s.seed = seed;
          auto [source, target] = tasks::make_task_pair(s);
          auto split =
              tasks::few_shot_split(target, shots, config.eval_fraction, seed);
          auto source_split = tasks::few_shot_split(source, source_shots,
                                                    config.eval_fraction, seed + 1);
          return {std::move(split.train), std::move(split.eval),
                  std::move(source_split.train)};
        } else {
          tasks::TaskDataset data = tasks::load_jsonl(t.path);
          if (data.input_dim != config.model.input_dim ||
              data.class_count > config.model.class_count) {
            throw ConfigError("task.path",
                              "dataset shape does not match the model spec");
          }
          data.class_count = config.model.class_count;
          auto split = tasks::few_shot_split(data, shots, config.eval_fraction, seed);
          std::optional<tasks::TaskDataset> source;
          if (t.source_path) {
            tasks::TaskDataset src = tasks::load_jsonl(*t.source_path);
            if (src.input_dim != config.model.input_dim ||
                src.class_count > config.model.class_count) {
              throw ConfigError("task.source_path",
                                "dataset shape does not match the model spec");
            }
            src.class_count = config.model.class_count;
            source = tasks::few_shot_split(src, source_shots, config.eval_fraction,
                                           seed + 1)
                         .train;
          }
          return {std::move(split.train), std::move(split.eval), std::move(source)};
        }
      },
      config.task);
}

RunFailure::RunFailure(Method method, std::uint64_t seed, std::size_t shots,
                       std::optional<std::size_t> step, const std::string& message)
    : Error(std::string(method_name(method)) + " seed " + std::to_string(seed) +
            " shots " + std::to_string(shots) +
            (step ? " step " + std::to_string(*step) : std::string()) + ": " +
            message),
      method_(method),
      seed_(seed),
      shots_(shots),
      step_(step) {}

RunOutcome execute_run(const ExperimentConfig& config, Method method,
                       std::uint64_t seed, std::size_t shots) {
  RunOutcome out;
  out.method = method;
  out.seed = seed;
  out.shots = shots;
  model::ModelSpec spec = config.model;
  spec.init_seed = seed;
  trainer::TrainConfig tc = method_config(config.train, method);
  tc.seed = seed;
  try {
    const trainer::TrainingData data = make_data(config, seed, shots);
    out.report = trainer::train(spec, data, tc);
  } catch (const trainer::DivergenceError& e) {
    throw RunFailure(method, seed, shots, e.step(), e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw RunFailure(method, seed, shots, std::nullopt, e.what());
  }
  if (out.report.history.empty()) {
    out.summary.avg_accuracy = out.report.final_accuracy;
    out.summary.stability_degenerate = true;
    out.summary.alignment_missing = true;
  } else {
    out.summary = metrics::summarize(out.report, config.loss_threshold);
  }
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work units share no
// mutable state; the first failure by index is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string run_stem(const RunOutcome& r) {
  return std::string(method_name(r.method)) + "_seed" + std::to_string(r.seed);
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
}

void write_run_artifacts(const std::filesystem::path& dir, const RunOutcome& r,
                         bool with_json) {
  std::ostringstream csv_body;
  csv::write_steps(csv_body, r.report);
  write_file(dir / (run_stem(r) + ".csv"), csv_body.str());
  if (with_json) {
    json doc = r.report;
    doc["run"] = {{"method", method_name(r.method)},
                  {"seed", r.seed},
                  {"shots", r.shots}};
    doc["final"]["summary"] = r.summary;
    write_file(dir / (run_stem(r) + ".json"), doc.dump(2) + "\n");
  }
}

std::string opt_num(double v, bool missing) {
  return missing ? std::string() : csv::number(v);
}

std::string comparison_row(const RunOutcome& r) {
  const auto& s = r.summary;
  const bool empty = r.report.history.empty();
  std::ostringstream os;
  os << method_name(r.method) << ',' << r.seed << ',' << r.shots << ','
     << csv::number(s.avg_accuracy) << ','
     << opt_num(s.gradient_stability, empty) << ','
     << opt_num(s.directional_alignment, empty || s.alignment_missing) << ','
     << opt_num(s.final_loss, empty) << '\n';
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

void prepare_dir(const std::filesystem::path& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

void check_artifacts(const std::filesystem::path& dir) {
  const auto problems = validate_artifacts(dir);
  if (!problems.empty()) {
    throw Error("artifact validation failed: " + problems.front());
  }
}

}  // namespace

std::vector<RunOutcome> run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path& out_dir) {
  prepare_dir(out_dir);
  std::vector<RunOutcome> runs(config.seeds.size());
  parallel_for(runs.size(), config.threads, [&](std::size_t i) {
    runs[i] = execute_run(config, config.method, config.seeds[i], config.shots);
    if (!out_dir.empty()) write_run_artifacts(out_dir, runs[i], true);
  });
  if (!out_dir.empty()) {
    std::string body = csv::header(csv::kComparisonColumns) + "\n";
    for (const auto& r : runs) body += comparison_row(r);
    write_file(out_dir / "summary.csv", body);
    check_artifacts(out_dir);
  }
  return runs;
}

SweepResult sweep_samples(const ExperimentConfig& config,
                          const std::vector<std::size_t>& shot_list,
                          const std::filesystem::path& out_dir) {
  if (shot_list.empty()) throw ConfigError("shots", "shot list is empty");
  for (std::size_t i = 0; i < shot_list.size(); ++i) {
    if (shot_list[i] < 1 || (i > 0 && shot_list[i] <= shot_list[i - 1])) {
      throw ConfigError("shots", "shot list must be positive and ascending");
    }
  }
  // The largest point must be feasible before any work starts.
  try {
    (void)make_data(config, config.seeds.front(), shot_list.back());
  } catch (const InvalidArgument& e) {
    throw ConfigError("shots", "insufficient data for " +
                                   std::to_string(shot_list.back()) +
                                   " shots per class: " + e.what());
  }
  prepare_dir(out_dir);

  const std::size_t n_seeds = config.seeds.size();
  SweepResult result;
  result.runs.resize(shot_list.size() * n_seeds);
  parallel_for(result.runs.size(), config.threads, [&](std::size_t i) {
    result.runs[i] = execute_run(config, config.method, config.seeds[i % n_seeds],
                                 shot_list[i / n_seeds]);
  });

  std::string rows = "shots,seed,avg_accuracy,stability,alignment\n";
  std::string summary =
      "shots,runs,mean_accuracy,std_accuracy,mean_stability,mean_alignment\n";
  for (std::size_t s = 0; s < shot_list.size(); ++s) {
    std::vector<double> acc, stab, align;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const RunOutcome& r = result.runs[s * n_seeds + k];
      acc.push_back(r.summary.avg_accuracy);
      stab.push_back(r.summary.gradient_stability);
      align.push_back(r.summary.directional_alignment);
      rows += std::to_string(r.shots) + ',' + std::to_string(r.seed) + ',' +
              csv::number(r.summary.avg_accuracy) + ',' +
              csv::number(r.summary.gradient_stability) + ',' +
              csv::number(r.summary.directional_alignment) + '\n';
    }
    SweepPoint p{shot_list[s], n_seeds, mean_of(acc), std_of(acc), mean_of(stab),
                 mean_of(align)};
    summary += std::to_string(p.shots) + ',' + std::to_string(p.runs) + ',' +
               csv::number(p.mean_accuracy) + ',' + csv::number(p.std_accuracy) +
               ',' + csv::number(p.mean_stability) + ',' +
               csv::number(p.mean_alignment) + '\n';
    result.points.push_back(p);
  }
  if (!out_dir.empty()) {
    write_file(out_dir / "sweep.csv", rows);
    write_file(out_dir / "sweep_summary.csv", summary);
    check_artifacts(out_dir);
  }
  return result;
}

ComparisonResult compare_methods(const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir) {
  prepare_dir(out_dir);
  const std::size_t n_seeds = config.seeds.size();
  ComparisonResult result;
  result.runs.resize(config.methods.size() * n_seeds);
  parallel_for(result.runs.size(), config.threads, [&](std::size_t i) {
    result.runs[i] = execute_run(config, config.methods[i / n_seeds],
                                 config.seeds[i % n_seeds], config.shots);
    if (!out_dir.empty()) write_run_artifacts(out_dir, result.runs[i], false);
  });

  std::string rows = csv::header(csv::kComparisonColumns) + "\n";
  std::string means =
      "method,runs,avg_accuracy,gradient_stability,directional_alignment,"
      "final_loss\n";
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    std::vector<double> acc, stab, align, loss;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const RunOutcome& r = result.runs[m * n_seeds + k];
      rows += comparison_row(r);
      acc.push_back(r.summary.avg_accuracy);
      stab.push_back(r.summary.gradient_stability);
      align.push_back(r.summary.directional_alignment);
      loss.push_back(r.summary.final_loss);
    }
    MethodMean mm{config.methods[m], n_seeds, mean_of(acc), mean_of(stab),
                  mean_of(align), mean_of(loss)};
    means += std::string(method_name(mm.method)) + ',' + std::to_string(mm.runs) +
             ',' + csv::number(mm.avg_accuracy) + ',' +
             csv::number(mm.gradient_stability) + ',' +
             csv::number(mm.directional_alignment) + ',' +
             csv::number(mm.final_loss) + '\n';
    result.means.push_back(mm);
  }
  if (!out_dir.empty()) {
    write_file(out_dir / "comparison.csv", rows);
    write_file(out_dir / "comparison_mean.csv", means);
    check_artifacts(out_dir);
  }
  return result;
}

std::vector<std::string> validate_artifacts(const std::filesystem::path& dir) {
  static const std::set<std::string> known_headers = {
      csv::header(csv::kStepColumns),
      csv::header(csv::kComparisonColumns),
      "shots,seed,avg_accuracy,stability,alignment",
      "shots,runs,mean_accuracy,std_accuracy,mean_stability,mean_alignment",
      "method,runs,avg_accuracy,gradient_stability,directional_alignment,final_loss",
  };
  std::vector<std::string> problems;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    if (path.extension() == ".csv") {
      std::ifstream in(path);
      std::string line;
      if (!std::getline(in, line) || !known_headers.count(line)) {
        problems.push_back(name + ": unknown header");
        continue;
      }
      const auto columns = std::count(line.begin(), line.end(), ',');
      std::size_t row = 1;
      while (std::getline(in, line)) {
        ++row;
        if (std::count(line.begin(), line.end(), ',') != columns) {
          problems.push_back(name + ": row " + std::to_string(row) +
                             " has the wrong number of fields");
          break;
        }
      }
    } else if (path.extension() == ".json" && name != "error.json") {
      std::ifstream in(path);
      try {
        json doc;
        in >> doc;
        for (const char* key : {"config", "records", "final", "run"}) {
          if (!doc.contains(key)) {
            problems.push_back(name + ": missing key '" + key + "'");
          }
        }
      } catch (const json::exception& e) {
        problems.push_back(name + ": " + e.what());
      }
    }
  }
  return problems;
}

}  // namespace gradguide::experiment
