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


// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradguide/experiment.hpp"
#include "gradguide/guidance.hpp"
#include "gradguide/model.hpp"
#include "gradguide/tasks.hpp"
#include "gradguide/trainer.hpp"
#include "oracles.hpp"

using namespace gradguide;
namespace fs = std::filesystem;
using Vec = std::vector<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

experiment::ExperimentConfig load(const char* name) {
  return experiment::load_config(fs::path(GRADGUIDE_CONFIG_DIR) / name);
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::uint64_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

// Base loss at flat parameters, evaluated without a tape.
double base_value(const model::ModelSpec& spec, const ParameterLayout& layout,
                  const tasks::TaskDataset& data, const Vec& theta) {
  return guidance::base_loss(ParameterSet::from_flat(layout, theta), spec, data).item();
}

tasks::TaskDataset small_task(std::size_t dim, std::size_t k, std::uint64_t seed) {
  tasks::GaussianTaskSpec g;
  g.dim = dim;
  g.class_count = k;
  g.n_per_class = 6;
  g.separation = 1.5;
  g.seed = seed;
  return tasks::make_gaussian_task(g);
}

std::vector<model::ModelSpec> toy_models() {
  model::ModelSpec lin;
  lin.input_dim = 4;
  lin.class_count = 3;
  lin.init_scale = 0.5;
  model::ModelSpec mlp = lin;
  mlp.architecture = model::Architecture::mlp;
  mlp.hidden_dims = {8};
  model::ModelSpec att = lin;
  att.architecture = model::Architecture::tiny_attention;
  att.input_dim = 6;
  att.sequence_length = 2;
  att.hidden_dims = {4};
  return {lin, mlp, att};
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t most_params = 0;
  std::uint64_t seed = 1;
  for (auto spec : toy_models()) {
    spec.init_seed = seed;
    const auto data = small_task(spec.input_dim, spec.class_count, seed++);
    const ParameterSet p = model::init_model(spec);
    most_params = std::max(most_params, p.size());
    const auto loss = [&](const ParameterSet& q) { return guidance::base_loss(q, spec, data); };
    const GradientVector g = loss_gradient(loss, p);
    const Vec fd = oracle::fd_gradient(
        [&](const Vec& t) { return base_value(spec, p.layout(), data, t); }, p.flatten());
    worst = std::max(worst, oracle::rel_error(g.values(), fd));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && most_params <= 200 && secs < 10.0,
          "max rel error " + fmt(worst) + " over 3 architectures (<= " +
              std::to_string(most_params) + " params), " + fmt(secs) + " s"};
}

Outcome second_order_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  double total_err = 0.0, hvp_err = 0.0, quad_err = 0.0;
  std::uint64_t seed = 11;
  for (auto spec : toy_models()) {
    spec.init_seed = seed;
    const auto data = small_task(spec.input_dim, spec.class_count, seed++);
    const ParameterSet p = model::init_model(spec);
    const std::size_t n = p.size();
    const auto loss = [&](const ParameterSet& q) { return guidance::base_loss(q, spec, data); };

    // HVP against a difference of analytic gradients.
    const Vec v = oracle::random_vec(rng, n);
    const GradientVector hv = hvp(loss, p, v);
    const Vec fd_hv = oracle::fd_hvp(
        [&](const Vec& t) {
          const GradientVector g = loss_gradient(loss, ParameterSet::from_flat(p.layout(), t));
          return Vec(g.values().begin(), g.values().end());
        },
        p.flatten(), v);
    hvp_err = std::max(hvp_err, oracle::rel_error(hv.values(), fd_hv));

    // Exact total gradient (through R_dir and R_mag) against differences of
    // the scalar objective.
    trainer::TrainState st;
    st.params = p;
    st.prior = {oracle::unit(oracle::random_vec(rng, n)), 1, 0};
    st.tau = 0.5 * loss_gradient(loss, p).norm();
    trainer::TrainConfig cfg;
    cfg.guidance.lambda1 = 0.5;
    cfg.guidance.lambda2 = 0.5;
    cfg.guidance.lambda3 = 0.0;
    cfg.guidance.mode = guidance::GradientMode::exact;
    const Vec exact = trainer::total_loss_gradient(st, loss, cfg);
    const Vec fd_total = oracle::fd_gradient(
        [&](const Vec& t) {
          autodiff::Tape tape;
          const ParameterSet q = ParameterSet::from_flat(p.layout(), t).attach(tape);
          return guidance::total_loss(q, spec, data, cfg.guidance, st.tau, st.prior)
              .breakdown.total;
        },
        p.flatten());
    total_err = std::max(total_err, oracle::rel_error(exact, fd_total));
  }
  for (std::size_t n = 1; n <= 10; ++n) {
    const auto q = oracle::random_quadratic(rng, n);
    const Vec theta = oracle::random_vec(rng, n);
    const Vec v = oracle::random_vec(rng, n);
    const GradientVector hv =
        hvp(fixtures::quadratic_loss(q), fixtures::vector_params(theta), v);
    quad_err = std::max(quad_err, oracle::rel_error(hv.values(), q.apply(v)));
  }
  const double secs = seconds_since(t0);
  return {total_err < 1e-4 && hvp_err < 1e-4 && quad_err < 1e-10 && secs < 30.0,
          "total-grad " + fmt(total_err) + ", hvp " + fmt(hvp_err) + ", quadratic hvp " +
              fmt(quad_err) + ", " + fmt(secs) + " s"};
}

GradientVector flat(Vec v) {
  ParameterLayout layout;
  layout.add("g", {v.size()});
  const std::size_t n = v.size();
  return {layout, Tensor({n}, std::move(v))};
}

Outcome regularizer_values() {
  struct Case {
    std::string name;
    double got, want;
  };
  auto rdir = [](Vec g, Vec d, double l1) {
    return guidance::direction_regularizer(flat(std::move(g)), {std::move(d), 1, 0}, l1)
        .value.item();
  };
  auto rmag = [](Vec g, double tau, double l2) {
    return guidance::magnitude_regularizer(flat(std::move(g)), tau, l2).item();
  };
  auto rgrad = [](Vec t, Vec s, double l3) {
    return guidance::contrast_loss(flat(std::move(t)), s, l3).item();
  };
  const std::vector<Case> cases = {
      {"R_dir aligned", rdir({3, 4}, {0.6, 0.8}, 7), 0.0},
      {"R_dir antipodal", rdir({3, 4}, {-0.6, -0.8}, 1), 4.0},
      {"R_dir (1,0)", rdir({3, 4}, {1, 0}, 1), 0.8},
      {"R_mag on target", rmag({3, 4}, 5, 2), 0.0},
      {"R_mag zero g", rmag({0, 0}, 1, 3), 3.0},
      {"R_mag tau 1", rmag({3, 4}, 1, 0.5), 8.0},
      {"R_grad identical", rgrad({1, 2, 3}, {1, 2, 3}, 5), 0.0},
      {"R_grad opposite", rgrad({1, 0}, {-1, 0}, 1), 2.0},
      {"R_grad orthogonal", rgrad({1, 0}, {0, 1}, 4), 4.0},
  };
  double worst = 0.0;
  std::string bad;
  for (const auto& c : cases) {
    const double err = std::abs(c.got - c.want);
    if (err > worst) worst = err;
    if (!(err <= 1e-10)) bad += " " + c.name;
  }
  return {bad.empty(), std::to_string(cases.size()) + " examples, max abs error " +
                           fmt(worst) + (bad.empty() ? "" : ", failing:" + bad)};
}

Outcome vanilla_equivalence() {
  auto cfg = load("default.json");
  cfg.train.guidance.lambda1 = cfg.train.guidance.lambda2 = cfg.train.guidance.lambda3 = 0.0;
  const std::uint64_t seed = 3;
  std::size_t steps = 0;
  bool same = true;
  // Step by step through the trainer, for every method's configuration.
  for (auto method : {experiment::Method::guided_exact, experiment::Method::guided_fd}) {
    const auto data = experiment::make_data(cfg, seed, cfg.shots);
    auto spec = cfg.model;
    spec.init_seed = seed;
    trainer::TrainState a, b;
    a.params = b.params = model::init_model(spec);
    const auto vcfg = experiment::method_config(cfg.train, experiment::Method::vanilla);
    const auto gcfg = experiment::method_config(cfg.train, method);
    for (std::size_t s = 0; s < 150; ++s) {
      trainer::train_step(a, spec, data.train, vcfg);
      trainer::train_step(b, spec, data.train, gcfg);
      same = same && a.params.flatten() == b.params.flatten() &&
             a.history.back().loss.total == b.history.back().loss.total;
    }
    steps = a.step;
  }
  // And through the full run path.
  const auto v = experiment::execute_run(cfg, experiment::Method::vanilla, seed, cfg.shots);
  const auto g =
      experiment::execute_run(cfg, experiment::Method::guided_exact, seed, cfg.shots);
  same = same && v.report.history.size() == g.report.history.size() &&
         v.report.final_params.flatten() == g.report.final_params.flatten();
  for (std::size_t i = 0; same && i < v.report.history.size(); ++i) {
    same = v.report.history[i].loss.total == g.report.history[i].loss.total &&
           v.report.history[i].update_norm == g.report.history[i].update_norm;
  }
  return {same && steps >= 100,
          std::to_string(steps) + " stepped updates and " +
              std::to_string(v.report.history.size()) + " run steps " +
              (same ? "bitwise identical" : "differ")};
}

template <typename F>
double final_quarter_mean(const trainer::RunReport& r, F&& value) {
  const auto& h = r.history;
  const std::size_t start = h.size() - h.size() / 4;
  double total = 0.0;
  for (std::size_t i = start; i < h.size(); ++i) total += value(h[i]);
  return total / static_cast<double>(h.size() - start);
}

Outcome mechanism_effects() {
  const auto t0 = Clock::now();
  auto base = load("default.json");
  base.seeds = seed_range(20);
  base.method = experiment::Method::guided_exact;
  base.train.freeze_prior = true;
  auto with = [&](double l1, double l2) {
    auto c = base;
    c.train.guidance.lambda1 = l1;
    c.train.guidance.lambda2 = l2;
    c.train.guidance.lambda3 = 0.0;
    return experiment::run_experiment(c, {});
  };
  const auto off = with(0.0, 0.0);
  const auto dir = with(10.0, 0.0);
  const auto mag = with(0.0, 10.0);
  std::size_t dir_wins = 0, mag_wins = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    auto cosine = [](const trainer::StepRecord& s) { return s.loss.cos_prior.value_or(0.0); };
    if (final_quarter_mean(dir[i].report, cosine) > final_quarter_mean(off[i].report, cosine)) {
      ++dir_wins;
    }
    auto gap = [](const trainer::RunReport& r) {
      return final_quarter_mean(
          r, [&](const trainer::StepRecord& s) { return std::abs(s.loss.grad_norm - r.tau); });
    };
    if (gap(mag[i].report) < gap(off[i].report)) ++mag_wins;
  }
  const double secs = seconds_since(t0);
  return {dir_wins >= 18 && mag_wins >= 18 && secs < 120.0,
          "direction " + std::to_string(dir_wins) + "/20, magnitude " +
              std::to_string(mag_wins) + "/20, " + fmt(secs) + " s"};
}

Outcome ordering_analogue() {
  const auto t0 = Clock::now();
  auto cfg = load("default.json");
  cfg.seeds = seed_range(20);
  cfg.methods = {experiment::Method::vanilla, experiment::Method::guided_exact};
  const auto cr = experiment::compare_methods(cfg, {});
  const auto& v = cr.means[0];
  const auto& g = cr.means[1];
  const double secs = seconds_since(t0);
  const bool align = g.directional_alignment > v.directional_alignment;
  const bool acc = g.avg_accuracy >= v.avg_accuracy - 0.01;
  return {align && acc && secs < 300.0,
          "alignment " + fmt(g.directional_alignment) + " vs " +
              fmt(v.directional_alignment) + ", accuracy " + fmt(g.avg_accuracy) + " vs " +
              fmt(v.avg_accuracy) + ", " + fmt(secs) + " s"};
}

Outcome shots_trend() {
  const auto t0 = Clock::now();
  const auto cfg = load("sweep.json");
  const std::vector<std::size_t> shots = {16, 32, 64, 128, 256};
  const auto sw = experiment::sweep_samples(cfg, shots, {});
  bool monotone = true;
  std::string means;
  for (std::size_t i = 0; i < sw.points.size(); ++i) {
    means += (i ? " " : "") + fmt(sw.points[i].mean_accuracy);
    if (i > 0 && sw.points[i].mean_accuracy < sw.points[i - 1].mean_accuracy - 0.02) {
      monotone = false;
    }
  }
  const double plateau = std::abs(sw.points[4].mean_accuracy - sw.points[3].mean_accuracy);
  const double secs = seconds_since(t0);
  return {monotone && plateau <= 0.02 && cfg.seeds.size() == 10 && secs < 300.0,
          "means " + means + ", |256-128| " + fmt(plateau) + ", " + fmt(secs) + " s"};
}

Outcome loss_shape() {
  auto cfg = load("default.json");
  cfg.seeds = seed_range(5);
  const auto runs = experiment::run_experiment(cfg, {});
  std::size_t ok = 0;
  double worst_quarter = 1.0, worst_tail = 0.0;
  for (const auto& r : runs) {
    const auto& h = r.report.history;
    const std::size_t n = h.size();
    const double l0 = h.front().loss.total;
    const double lend = h.back().loss.total;
    const double quarter = (l0 - h[n / 4 - 1].loss.total) / (l0 - lend);
    const double tail_start = h[n - n / 10 - 1].loss.total;
    const double tail = std::abs(lend - tail_start) / std::abs(tail_start);
    worst_quarter = std::min(worst_quarter, quarter);
    worst_tail = std::max(worst_tail, tail);
    ok += quarter >= 0.5 && tail < 0.01;
  }
  return {ok == runs.size(), std::to_string(ok) + "/" + std::to_string(runs.size()) +
                                 " seeds, min first-quarter share " + fmt(worst_quarter) +
                                 ", max final-tenth change " + fmt(worst_tail)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Number of CSV files under `a` and whether each equals its twin under `b`.
std::pair<std::size_t, bool> same_csvs(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  bool same = true;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++n;
    same = same && fs::exists(b / e.path().filename()) &&
           slurp(e.path()) == slurp(b / e.path().filename());
  }
  return {n, same};
}

Outcome determinism_and_formats() {
  const fs::path root = fs::temp_directory_path() / "gradguide_acceptance";
  fs::remove_all(root);
  auto cfg = load("default.json");
  cfg.seeds = {0, 1};
  cfg.train.epochs = 40;
  auto sweep_cfg = load("sweep.json");
  sweep_cfg.seeds = {0, 1};
  sweep_cfg.train.epochs = 20;
  std::size_t files = 0;
  bool same = true;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / std::to_string(rep);
    experiment::run_experiment(cfg, dir / "run");
    experiment::compare_methods(cfg, dir / "compare");
    experiment::sweep_samples(sweep_cfg, {16, 32}, dir / "sweep");
  }
  for (const char* cmd : {"run", "compare", "sweep"}) {
    const auto [n, eq] = same_csvs(root / "0" / cmd, root / "1" / cmd);
    files += n;
    same = same && eq && n > 0;
  }

  tasks::GaussianTaskSpec g;
  g.dim = 5;
  g.class_count = 4;
  g.n_per_class = 30;
  g.seed = 9;
  const auto data = tasks::make_gaussian_task(g);
  tasks::save_jsonl(root / "data.jsonl", data);
  const auto back = tasks::load_jsonl(root / "data.jsonl");
  const bool jsonl = back.inputs == data.inputs && back.labels == data.labels &&
                     back.input_dim == data.input_dim;

  bool ckpt = true;
  for (auto spec : toy_models()) {
    spec.init_seed = 5;
    spec.init_scale = 0.37;
    auto params = model::init_model(spec);
    // Perturb into values with full-precision mantissas.
    Vec v = params.flatten();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] / 3.0 + 1e-17 * static_cast<double>(i);
    params = ParameterSet::from_flat(params.layout(), v);
    model::save_checkpoint(root / "model.json", spec, params);
    const auto loaded = model::load_checkpoint(root / "model.json");
    ckpt = ckpt && loaded.spec == spec && loaded.params.flatten() == v &&
           loaded.params.layout() == params.layout();
  }
  fs::remove_all(root);
  return {same && jsonl && ckpt, std::to_string(files) + " CSV files " +
                                     (same ? "identical" : "differ") + ", jsonl " +
                                     (jsonl ? "exact" : "mismatch") + ", checkpoint " +
                                     (ckpt ? "exact" : "mismatch")};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradient correctness", gradient_correctness},
      {"second-order correctness", second_order_correctness},
      {"closed-form regularizer values", regularizer_values},
      {"vanilla equivalence", vanilla_equivalence},
      {"mechanism effects", mechanism_effects},
      {"guided vs vanilla ordering", ordering_analogue},
      {"accuracy vs shots trend", shots_trend},
      {"loss curve shape", loss_shape},
      {"determinism and formats", determinism_and_formats},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << c.name << ": "
              << o.detail << std::endl;
  }

  // Suite runtime: this binary plus the unit tests, which run with no network.
  const double acceptance_secs = seconds_since(t0);
  const auto u0 = Clock::now();
  const int unit_status = std::system(GRADGUIDE_UNIT_TESTS " > /dev/null 2>&1");
  const double unit_secs = seconds_since(u0);
  const double total = acceptance_secs + unit_secs;
  const bool fast = unit_status == 0 && total < 300.0;
  failed += !fast;
  std::cout << (fast ? "PASS" : "FAIL") << " [10] suite runtime: " << fmt(total)
            << " s (acceptance " << fmt(acceptance_secs) << " s, unit " << fmt(unit_secs)
            << " s" << (unit_status == 0 ? "" : ", unit tests failed") << ")" << std::endl;
  return failed == 0 ? 0 : 1;
}
