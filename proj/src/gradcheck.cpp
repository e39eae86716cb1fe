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

#include "gradguide/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gradguide/error.hpp"
#include "gradguide/guidance.hpp"
#include "gradguide/random.hpp"

namespace gradguide::gradcheck {

namespace ad = autodiff;
using ad::OpKind;

namespace {

constexpr double kStep = 1e-5;
constexpr double kFirstOrderTol = 1e-5;
constexpr double kSecondOrderTol = 1e-4;
constexpr std::size_t kMaxParams = 500;

Tensor random_tensor(Rng& rng, ad::Shape shape, double lo, double hi) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Values away from 0 so relu's kink is never straddled.
Tensor signed_tensor(Rng& rng, ad::Shape shape) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) {
    const double m = rng.uniform(0.2, 1.5);
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor(std::move(shape), std::move(v));
}

using OpFn = std::function<Tensor(std::span<const Tensor>)>;

// Compares d/dx_j of sum(w * op(x)) against central differences over every
// input entry.
double check_case(const OpFn& op, std::vector<Tensor> inputs, Rng& rng) {
  const Tensor probe = op(inputs);
  const Tensor weights = random_tensor(rng, probe.shape(), -1.0, 1.0);
  auto objective = [&](std::span<const Tensor> in) {
    return ad::dot(op(in), weights);
  };

  ad::Tape tape;
  std::vector<Tensor> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.parameter(t));
  const auto grads = ad::gradients(objective(leaves), leaves, false);

  std::vector<double> analytic;
  std::vector<double> numeric;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    analytic.insert(analytic.end(), grads[i].values().begin(), grads[i].values().end());
    for (std::size_t e = 0; e < inputs[i].numel(); ++e) {
      auto shifted = [&](double delta) {
        std::vector<Tensor> in = inputs;
        std::vector<double> v(in[i].values().begin(), in[i].values().end());
        v[e] += delta;
        in[i] = Tensor(in[i].shape(), std::move(v));
        return objective(in).item();
      };
      numeric.push_back((shifted(kStep) - shifted(-kStep)) / (2.0 * kStep));
    }
  }
  return relative_error(analytic, numeric);
}

double check_op(OpKind kind, Rng& rng) {
  auto binary = [](auto f) {
    return OpFn([f](std::span<const Tensor> in) { return f(in[0], in[1]); });
  };
  auto unary = [](auto f) {
    return OpFn([f](std::span<const Tensor> in) { return f(in[0]); });
  };
  const auto r = [&](ad::Shape s) { return random_tensor(rng, std::move(s), -1.0, 1.0); };
  const auto pos = [&](ad::Shape s) { return random_tensor(rng, std::move(s), 0.5, 2.0); };

  double err = 0.0;
  auto run = [&](const OpFn& f, std::vector<Tensor> in) {
    err = std::max(err, check_case(f, std::move(in), rng));
  };
  switch (kind) {
    case OpKind::add:
      run(binary([](auto& a, auto& b) { return ad::add(a, b); }), {r({3, 4}), r({3, 4})});
      run(binary([](auto& a, auto& b) { return ad::add(a, b); }), {r({3, 4}), r({4})});
      break;
    case OpKind::sub:
      run(binary([](auto& a, auto& b) { return ad::sub(a, b); }), {r({3, 4}), r({3, 4})});
      run(binary([](auto& a, auto& b) { return ad::sub(a, b); }), {r({1}), r({5})});
      break;
    case OpKind::mul:
      run(binary([](auto& a, auto& b) { return ad::mul(a, b); }), {r({3, 4}), r({3, 4})});
      run(binary([](auto& a, auto& b) { return ad::mul(a, b); }), {r({3, 4}), r({1})});
      break;
    case OpKind::div:
      run(binary([](auto& a, auto& b) { return ad::div(a, b); }), {r({3, 4}), pos({3, 4})});
      run(binary([](auto& a, auto& b) { return ad::div(a, b); }), {r({6}), pos({1})});
      break;
    case OpKind::scalar_mul:
      run(unary([](auto& a) { return ad::scale(a, 1.7); }), {r({3, 4})});
      break;
    case OpKind::matmul:
      for (int flags = 0; flags < 4; ++flags) {
        const bool ta = flags & 1;
        const bool tb = flags & 2;
        run(binary([ta, tb](auto& a, auto& b) { return ad::matmul(a, b, ta, tb); }),
            {r(ta ? ad::Shape{4, 3} : ad::Shape{3, 4}),
             r(tb ? ad::Shape{2, 4} : ad::Shape{4, 2})});
      }
      break;
    case OpKind::relu:
      run(unary([](auto& a) { return ad::relu(a); }), {signed_tensor(rng, {3, 4})});
      break;
    case OpKind::tanh:
      run(unary([](auto& a) { return ad::tanh(a); }), {r({3, 4})});
      break;
    case OpKind::exp:
      run(unary([](auto& a) { return ad::exp(a); }), {r({3, 4})});
      break;
    case OpKind::log:
      run(unary([](auto& a) { return ad::log(a); }), {pos({3, 4})});
      break;
    case OpKind::sum:
      run(unary([](auto& a) { return ad::sum(a); }), {r({3, 4})});
      break;
    case OpKind::mean:
      run(unary([](auto& a) { return ad::mean(a); }), {r({3, 4})});
      break;
    case OpKind::l2_norm:
      run(unary([](auto& a) { return ad::l2_norm(a); }), {r({5})});
      break;
    case OpKind::dot:
      run(binary([](auto& a, auto& b) { return ad::dot(a, b); }), {r({6}), r({6})});
      break;
    case OpKind::softmax_cross_entropy: {
      auto labels = std::make_shared<const std::vector<int>>(std::vector<int>{0, 2, 1, 2});
      run(unary([labels](auto& a) { return ad::softmax_cross_entropy(a, labels); }),
          {random_tensor(rng, {4, 3}, -2.0, 2.0)});
      break;
    }
    case OpKind::concat:
      run(binary([](auto& a, auto& b) { return ad::concat({a, b}); }), {r({2, 2}), r({3})});
      break;
    case OpKind::slice:
      run(unary([](auto& a) { return ad::slice(a, 3, {2, 2}); }), {r({10})});
      break;
    case OpKind::leaf:
      break;
  }
  return err;
}

std::vector<double> central_gradient(const std::function<double(const ParameterSet&)>& f,
                                     const ParameterSet& params) {
  std::vector<double> theta = params.flatten();
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + kStep;
    const double up = f(ParameterSet::from_flat(params.layout(), theta));
    theta[i] = keep - kStep;
    const double down = f(ParameterSet::from_flat(params.layout(), theta));
    theta[i] = keep;
    out[i] = (up - down) / (2.0 * kStep);
  }
  return out;
}

std::vector<double> unit_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) {
    x = rng.normal();
    s += x * x;
  }
  s = std::sqrt(s);
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

double relative_error(std::span<const double> analytic,
                      std::span<const double> reference) {
  if (analytic.size() != reference.size()) {
    throw ShapeError("relative_error: length mismatch");
  }
  double diff = 0.0;
  double scale = 1e-6;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return diff / scale;
}

bool GradCheckReport::ok() const {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.passed(); });
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& r : results) {
    if (!r.passed()) out.push_back(r.component);
  }
  return out;
}

std::vector<CheckResult> check_ops(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng = Rng::stream(seed, 0x6c);
  for (OpKind kind : ad::differentiable_ops()) {
    out.push_back({"op:" + std::string(ad::op_name(kind)), check_op(kind, rng),
                   kFirstOrderTol, false});
  }
  return out;
}

GradCheckReport check_grads(const experiment::ExperimentConfig& config) {
  const std::uint64_t seed = config.seeds.front();
  model::ModelSpec spec = config.model;
  spec.init_seed = seed;
  const ParameterSet params = model::init_model(spec);
  if (params.size() > kMaxParams) {
    throw InvalidArgument("check-grads: model has " + std::to_string(params.size()) +
                          " parameters, the oracle suite allows at most " +
                          std::to_string(kMaxParams));
  }

  GradCheckReport report;
  report.results = check_ops(seed);

  trainer::TrainingData data = experiment::make_data(config, seed, config.shots);
  std::vector<std::size_t> idx(std::min<std::size_t>(data.train.size(), 16));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const tasks::TaskDataset batch = data.train.subset(idx);
  const LossEvaluator loss = [&](const ParameterSet& p) {
    return guidance::base_loss(p, spec, batch);
  };

  const GradientVector g = loss_gradient(loss, params);
  const auto numeric = central_gradient(
      [&](const ParameterSet& p) { return loss(p).item(); }, params);
  report.results.push_back({"base_loss_gradient",
                            relative_error(g.values(), numeric), kFirstOrderTol,
                            false});

  const guidance::GuidanceConfig& gcfg = config.train.guidance;
  if (!gcfg.any_active()) {
    report.results.push_back({"hvp", 0.0, kSecondOrderTol, true});
    report.results.push_back({"total_loss_gradient", 0.0, kSecondOrderTol, true});
    return report;
  }

  Rng rng = Rng::stream(seed, 0x4e55);
  const std::vector<double> v = unit_vector(rng, params.size());
  const GradientVector hv = hvp(loss, params, v);
  std::vector<double> fd_hv(params.size());
  {
    std::vector<double> theta = params.flatten();
    std::vector<double> plus = theta, minus = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      plus[i] += kStep * v[i];
      minus[i] -= kStep * v[i];
    }
    const auto gp = loss_gradient(loss, ParameterSet::from_flat(params.layout(), plus));
    const auto gm = loss_gradient(loss, ParameterSet::from_flat(params.layout(), minus));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      fd_hv[i] = (gp.values()[i] - gm.values()[i]) / (2.0 * kStep);
    }
  }
  report.results.push_back({"hvp", relative_error(hv.values(), fd_hv),
                            kSecondOrderTol, false});

  // Exact L_total gradient against differences of L_total itself. The prior,
  // source gradient and tau are chosen so every active term is nontrivial.
  trainer::TrainState state;
  state.params = params;
  state.prior = guidance::update_prior({}, unit_vector(rng, params.size()), 0.0);
  state.tau = 0.5 * g.norm() + 1e-3;
  std::vector<double> source;
  if (gcfg.lambda3 != 0.0) {
    source = unit_vector(rng, params.size());
    state.source_gradient = source;
  }
  trainer::TrainConfig tc = config.train;
  tc.guidance.mode = guidance::GradientMode::exact;
  const std::vector<double> exact = trainer::total_loss_gradient(state, loss, tc);
  const auto total_numeric = central_gradient(
      [&](const ParameterSet& p) {
        ad::Tape tape;
        const ParameterSet leaves = p.attach(tape);
        std::optional<std::span<const double>> src;
        if (!source.empty()) src = std::span<const double>(source);
        guidance::GuidanceConfig values_only = tc.guidance;
        values_only.mode = guidance::GradientMode::fd_hvp;
        return guidance::guided_objective(loss(leaves), leaves, values_only,
                                          state.tau, state.prior, src)
            .breakdown.total;
      },
      params);
  report.results.push_back({"total_loss_gradient",
                            relative_error(exact, total_numeric), kSecondOrderTol,
                            false});
  return report;
}

}  // namespace gradguide::gradcheck
