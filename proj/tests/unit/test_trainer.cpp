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

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gradguide/error.hpp"
#include "gradguide/guidance.hpp"
#include "gradguide/model.hpp"
#include "gradguide/tasks.hpp"
#include "gradguide/trainer.hpp"
#include "oracles.hpp"

using namespace gradguide;
using namespace gradguide::trainer;
using gradguide::autodiff::Tape;

namespace {

tasks::TaskDataset gaussian(std::size_t dim, std::size_t k, std::size_t n,
                            double sep, std::uint64_t seed) {
  tasks::GaussianTaskSpec g;
  g.dim = dim;
  g.class_count = k;
  g.n_per_class = n;
  g.separation = sep;
  g.seed = seed;
  return tasks::make_gaussian_task(g);
}

model::ModelSpec logistic(std::size_t dim, std::size_t k, std::uint64_t seed = 0) {
  model::ModelSpec s;
  s.input_dim = dim;
  s.class_count = k;
  s.init_seed = seed;
  return s;
}

TrainConfig plain(double lr, std::size_t epochs) {
  TrainConfig c;
  c.learning_rate = lr;
  c.epochs = epochs;
  c.guidance.lambda1 = c.guidance.lambda2 = c.guidance.lambda3 = 0.0;
  return c;
}

TrainState quadratic_state(const std::vector<double>& theta, std::vector<double> d,
                           double tau, std::vector<double> source) {
  TrainState s;
  s.params = fixtures::vector_params(theta);
  s.prior = {std::move(d), 1, 0};
  s.tau = tau;
  s.source_gradient = std::move(source);
  return s;
}

}  // namespace

TEST_CASE("zero lambda reproduces plain gradient descent bit for bit") {
  const auto data = gaussian(3, 3, 40, 1.5, 4);
  const auto spec = logistic(3, 3, 9);
  auto cfg = plain(0.1, 120);
  const RunReport rep = train(spec, {data, data, std::nullopt}, cfg);
  REQUIRE(rep.history.size() == 120);

  ParameterSet p = model::init_model(spec);
  std::vector<double> losses;
  for (int s = 0; s < 120; ++s) {
    const auto loss = [&](const ParameterSet& q) {
      return guidance::base_loss(q, spec, data);
    };
    const GradientVector g = loss_gradient(loss, p);
    {
      Tape tape;
      losses.push_back(loss(p.attach(tape)).item());
    }
    std::vector<double> theta = p.flatten();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = theta[i] - 0.1 * g.values()[i];
    p = ParameterSet::from_flat(p.layout(), theta);
  }
  CHECK(rep.final_params.flatten() == p.flatten());
  for (std::size_t s = 0; s < 120; ++s) {
    CHECK(rep.history[s].loss.base == losses[s]);
    CHECK(rep.history[s].loss.total == losses[s]);
  }
}

TEST_CASE("total gradient on a quadratic matches the closed form") {
  std::mt19937_64 rng(21);
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto q = oracle::random_quadratic(rng, n);
    const auto theta = oracle::random_vec(rng, n);
    const auto d = oracle::unit(oracle::random_vec(rng, n));
    const auto src = oracle::random_vec(rng, n);
    const double gn = oracle::norm(q.grad(theta));
    const double tau = 0.5 * gn;
    TrainConfig cfg;
    cfg.guidance.lambda1 = 0.3;
    cfg.guidance.lambda2 = 0.2;
    cfg.guidance.lambda3 = 0.4;
    const auto state = quadratic_state(theta, d, tau, src);
    const auto loss = fixtures::quadratic_loss(q);
    const auto want = oracle::quadratic_total_gradient(q, theta, 0.3, d, 0.2, tau, 0.4, src);

    cfg.guidance.mode = guidance::GradientMode::exact;
    const auto exact = total_loss_gradient(state, loss, cfg);
    CHECK(oracle::rel_error(exact, want) < 1e-10);

    // A quadratic has a constant Hessian, so the difference scheme is only
    // limited by rounding.
    cfg.guidance.mode = guidance::GradientMode::fd_hvp;
    const auto fd = total_loss_gradient(state, loss, cfg);
    CHECK(oracle::rel_error(fd, want) < 1e-6);
  }
}

TEST_CASE("exact and finite-difference modes agree on an mlp") {
  const auto data = gaussian(4, 3, 10, 1.0, 2);
  model::ModelSpec spec = logistic(4, 3, 5);
  spec.architecture = model::Architecture::mlp;
  spec.hidden_dims = {6};
  spec.init_scale = 0.5;
  std::mt19937_64 rng(8);
  const std::size_t n = model::make_layout(spec).total();
  TrainState state;
  state.params = model::init_model(spec);
  state.prior = {oracle::unit(oracle::random_vec(rng, n)), 1, 0};
  state.source_gradient = oracle::random_vec(rng, n);
  const auto loss = [&](const ParameterSet& p) { return guidance::base_loss(p, spec, data); };
  state.tau = 0.5 * loss_gradient(loss, state.params).norm();

  TrainConfig cfg;
  cfg.guidance.mode = guidance::GradientMode::exact;
  const auto exact = total_loss_gradient(state, loss, cfg);
  cfg.guidance.mode = guidance::GradientMode::fd_hvp;
  const auto fd = total_loss_gradient(state, loss, cfg);
  CHECK(oracle::rel_error(fd, exact) < 1e-3);

  // And the exact mode against differences of the scalar objective.
  cfg.guidance.mode = guidance::GradientMode::exact;
  const auto objective = [&](const std::vector<double>& theta) {
    Tape tape;
    const ParameterSet p =
        ParameterSet::from_flat(state.params.layout(), theta).attach(tape);
    return guidance::total_loss(p, spec, data, cfg.guidance, state.tau, state.prior,
                                *state.source_gradient)
        .breakdown.total;
  };
  const auto fdl = oracle::fd_gradient(objective, state.params.flatten());
  CHECK(oracle::rel_error(exact, fdl) < 1e-4);
}

TEST_CASE("zero epochs leave the model untouched") {
  const auto data = gaussian(2, 2, 20, 1.0, 1);
  const auto spec = logistic(2, 2);
  auto cfg = plain(0.1, 0);
  const RunReport rep = train(spec, {data, data, std::nullopt}, cfg);
  CHECK(rep.history.empty());
  CHECK(rep.final_params.flatten() == model::init_model(spec).flatten());
  CHECK(rep.final_accuracy == rep.initial_accuracy);
}

TEST_CASE("training is deterministic") {
  const auto all = gaussian(3, 3, 60, 1.5, 3);
  const auto split = tasks::few_shot_split(all, 8, 0.5, 1);
  const auto source = gaussian(3, 3, 60, 1.5, 4);
  const auto spec = logistic(3, 3, 2);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 6;
  cfg.seed = 17;
  const TrainingData td{split.train, split.eval, source};
  const RunReport a = train(spec, td, cfg);
  const RunReport b = train(spec, td, cfg);
  REQUIRE(a.history.size() == b.history.size());
  CHECK(a.final_params.flatten() == b.final_params.flatten());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss.total == b.history[i].loss.total);
    CHECK(a.history[i].update_norm == b.history[i].update_norm);
    CHECK(a.history[i].loss.cos_prior == b.history[i].loss.cos_prior);
  }
  CHECK(a.final_accuracy == b.final_accuracy);
}

TEST_CASE("step counter and history stay in sync") {
  const auto data = gaussian(2, 2, 10, 1.0, 1);
  const auto spec = logistic(2, 2);
  TrainState st;
  st.params = model::init_model(spec);
  auto cfg = plain(0.05, 1);
  for (std::size_t s = 1; s <= 5; ++s) {
    const StepRecord r = train_step(st, spec, data, cfg);
    CHECK(r.step == s);
    CHECK(st.step == s);
    CHECK(st.history.size() == s);
    CHECK(r.update_norm >= 0.0);
  }
}

TEST_CASE("separable support set is fit exactly") {
  const auto all = gaussian(2, 2, 200, 8.0, 6);
  const auto split = tasks::few_shot_split(all, 64, 0.5, 2);
  REQUIRE(oracle::pocket_accuracy(split.train) == 1.0);
  const auto spec = logistic(2, 2);
  auto cfg = plain(0.5, 300);
  const RunReport rep = train(spec, {split.train, split.eval, std::nullopt}, cfg);
  CHECK(rep.final_train_accuracy == 1.0);
}

TEST_CASE("evaluate") {
  SUBCASE("all-zero logits pick class 0") {
    auto data = gaussian(2, 3, 10, 1.0, 1);
    auto spec = logistic(2, 3);
    const auto zero = ParameterSet::from_flat(
        model::make_layout(spec),
        std::vector<double>(model::make_layout(spec).total(), 0.0));
    const auto counts = data.class_counts();
    CHECK(evaluate(zero, spec, data) ==
          doctest::Approx(static_cast<double>(counts[0]) / data.size()));
    for (int p : predict(zero, spec, data)) CHECK(p == 0);
  }
  SUBCASE("labels replaced by predictions") {
    auto data = gaussian(3, 4, 25, 1.0, 2);
    auto spec = logistic(3, 4, 7);
    spec.init_scale = 1.0;
    const auto p = model::init_model(spec);
    data.labels = predict(p, spec, data);
    CHECK(evaluate(p, spec, data) == 1.0);
  }
  SUBCASE("random labels sit at chance") {
    auto data = gaussian(3, 4, 2500, 1.0, 3);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int& y : data.labels) y = pick(rng);
    auto spec = logistic(3, 4, 1);
    spec.init_scale = 1.0;
    CHECK(std::abs(evaluate(model::init_model(spec), spec, data) - 0.25) <= 0.02);
  }
}

TEST_CASE("small steps decrease the total loss") {
  const auto all = gaussian(3, 3, 60, 1.0, 11);
  const auto split = tasks::few_shot_split(all, 10, 0.5, 3);
  const auto source = gaussian(3, 3, 60, 1.0, 12);
  for (auto mode : {guidance::GradientMode::exact, guidance::GradientMode::fd_hvp}) {
    for (double lr : {1e-2, 3e-3}) {
      TrainConfig cfg;
      cfg.learning_rate = lr;
      cfg.epochs = 60;
      cfg.guidance.mode = mode;
      cfg.freeze_prior = true;
      const auto spec = logistic(3, 3, 4);
      // A fixed source gradient keeps the objective stationary across steps.
      TrainState st;
      st.params = model::init_model(spec);
      const auto loss = [&](const ParameterSet& p) {
        return guidance::base_loss(p, spec, split.train);
      };
      const auto src_loss = [&](const ParameterSet& p) {
        return guidance::base_loss(p, spec, source);
      };
      const GradientVector gs = loss_gradient(src_loss, st.params);
      st.prior = guidance::update_prior(st.prior, gs.values(), 0.9, 1e-12);
      st.source_gradient.emplace(gs.values().begin(), gs.values().end());
      st.tau = 0.5 * loss_gradient(loss, st.params).norm();
      for (std::size_t s = 0; s < cfg.epochs; ++s) train_step(st, loss, cfg);
      for (std::size_t s = 0; s + 10 < st.history.size(); ++s) {
        CHECK(st.history[s + 10].loss.total <= st.history[s].loss.total);
      }
    }
  }
}

TEST_CASE("direction term pulls the gradient toward the prior") {
  const auto data = gaussian(3, 3, 30, 1.0, 13);
  const auto spec = logistic(3, 3, 6);
  std::mt19937_64 rng(3);
  const std::size_t n = model::make_layout(spec).total();
  TrainState st;
  st.params = model::init_model(spec);
  st.prior = {oracle::unit(oracle::random_vec(rng, n)), 1, 0};
  st.tau = 1.0;
  const auto loss = [&](const ParameterSet& p) { return guidance::base_loss(p, spec, data); };
  TrainConfig cfg = plain(0.05, 1);
  cfg.guidance.lambda1 = 1.0;
  cfg.freeze_prior = true;
  const double before = *train_step(st, loss, cfg).loss.cos_prior;
  for (int s = 0; s < 200; ++s) train_step(st, loss, cfg);
  CHECK(*st.history.back().loss.cos_prior > before);
}

TEST_CASE("magnitude term pulls the gradient norm toward tau") {
  const auto data = gaussian(3, 3, 30, 1.0, 14);
  const auto spec = logistic(3, 3, 6);
  TrainState st;
  st.params = model::init_model(spec);
  const auto loss = [&](const ParameterSet& p) { return guidance::base_loss(p, spec, data); };
  const double g0 = loss_gradient(loss, st.params).norm();
  st.tau = 2.0 * g0;
  TrainConfig cfg = plain(0.05, 1);
  cfg.guidance.lambda2 = 5.0;
  for (int s = 0; s < 50; ++s) train_step(st, loss, cfg);
  const double g1 = loss_gradient(loss, st.params).norm();
  CHECK(std::abs(g1 - st.tau) < std::abs(g0 - st.tau));
}

TEST_CASE("train argument checks") {
  const auto data = gaussian(2, 2, 20, 1.0, 1);
  const auto spec = logistic(2, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  SUBCASE("contrast without a source") {
    CHECK_THROWS_AS(train(spec, {data, data, std::nullopt}, cfg), InvalidArgument);
  }
  SUBCASE("direction without a prior") {
    cfg.guidance.lambda3 = 0.0;
    cfg.warmup_steps = 0;
    CHECK_THROWS_AS(train(spec, {data, data, std::nullopt}, cfg), InvalidArgument);
  }
  SUBCASE("bad config values") {
    cfg.learning_rate = -1.0;
    CHECK_THROWS(train(spec, {data, data, data}, cfg));
  }
}

TEST_CASE("divergence reports the step") {
  // Identity quadratic: each step multiplies theta by (1 - lr), so the loss
  // overflows on the second step.
  const oracle::Quadratic q{2, {1, 0, 0, 1}, {0, 0}};
  TrainState st;
  st.params = fixtures::vector_params({1.0, -1.0});
  auto cfg = plain(1e200, 1);
  try {
    for (int s = 0; s < 5; ++s) train_step(st, fixtures::quadratic_loss(q), cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 2);
    CHECK(st.step == 1);
  }
}

TEST_CASE("adam and clipping") {
  const auto all = gaussian(2, 3, 60, 2.0, 15);
  const auto split = tasks::few_shot_split(all, 16, 0.5, 1);
  const auto spec = logistic(2, 3);
  auto cfg = plain(0.05, 100);
  cfg.optimizer = Optimizer::adam;
  const RunReport rep = train(spec, {split.train, split.eval, std::nullopt}, cfg);
  CHECK(rep.history.back().loss.base < rep.history.front().loss.base);
  CHECK(rep.final_accuracy > 0.5);

  auto clip = plain(10.0, 1);
  clip.gradient_clip = 1e-3;
  TrainState st;
  st.params = model::init_model(spec);
  const auto r = train_step(st, spec, split.train, clip);
  CHECK(r.update_norm == doctest::Approx(10.0 * 1e-3).epsilon(1e-9));
}
