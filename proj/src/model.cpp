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

#include "gradguide/model.hpp"

#include <cmath>
#include <fstream>

#include "gradguide/error.hpp"
#include "gradguide/random.hpp"
#include "gradguide/serialization.hpp"

namespace gradguide::model {

namespace ad = autodiff;

std::string_view architecture_name(Architecture arch) {
  switch (arch) {
    case Architecture::logistic: return "logistic";
    case Architecture::mlp: return "mlp";
    case Architecture::tiny_attention: return "tiny-attention";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "logistic") return Architecture::logistic;
  if (name == "mlp") return Architecture::mlp;
  if (name == "tiny-attention") return Architecture::tiny_attention;
  throw InvalidArgument("unknown architecture '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  if (class_count < 2) throw InvalidArgument("model: class_count must be >= 2");
  if (input_dim < 1) throw InvalidArgument("model: input_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw InvalidArgument("model: hidden dims must be >= 1");
  }
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw InvalidArgument("model: init_scale must be finite and >= 0");
  }
  switch (architecture) {
    case Architecture::logistic:
      if (!hidden_dims.empty()) {
        throw InvalidArgument("model: logistic takes no hidden dims");
      }
      break;
    case Architecture::mlp:
      if (hidden_dims.empty()) {
        throw InvalidArgument("model: mlp needs at least one hidden dim");
      }
      break;
    case Architecture::tiny_attention:
      if (hidden_dims.size() != 1) {
        throw InvalidArgument("model: tiny-attention needs exactly one hidden dim");
      }
      if (sequence_length < 1 || input_dim % sequence_length != 0) {
        throw InvalidArgument(
            "model: sequence_length must divide input_dim for tiny-attention");
      }
      break;
  }
}

ParameterLayout make_layout(const ModelSpec& spec) {
  spec.validate();
  ParameterLayout layout;
  switch (spec.architecture) {
    case Architecture::logistic:
      layout.add("weight", {spec.input_dim, spec.class_count});
      layout.add("bias", {spec.class_count});
      break;
    case Architecture::mlp: {
      std::size_t width = spec.input_dim;
      for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
        const std::string idx = std::to_string(i);
        layout.add("w" + idx, {width, spec.hidden_dims[i]});
        layout.add("b" + idx, {spec.hidden_dims[i]});
        width = spec.hidden_dims[i];
      }
      layout.add("w_out", {width, spec.class_count});
      layout.add("b_out", {spec.class_count});
      break;
    }
    case Architecture::tiny_attention: {
      const std::size_t chunk = spec.input_dim / spec.sequence_length;
      const std::size_t width = spec.hidden_dims[0];
      layout.add("w_query", {chunk, width});
      layout.add("w_key", {chunk, width});
      layout.add("w_value", {chunk, width});
      layout.add("w_out", {width, spec.class_count});
      layout.add("b_out", {spec.class_count});
      break;
    }
  }
  return layout;
}

ParameterSet init_model(const ModelSpec& spec) {
  const ParameterLayout layout = make_layout(spec);
  Rng rng = Rng::stream(spec.init_seed, 0x1417);
  std::vector<Tensor> tensors;
  for (const auto& slot : layout.slots()) {
    const bool is_bias = slot.name.front() == 'b';
    std::vector<double> values(ad::numel(slot.shape), 0.0);
    if (!is_bias) {
      for (double& v : values) v = rng.uniform(-spec.init_scale, spec.init_scale);
    }
    tensors.emplace_back(slot.shape, std::move(values));
  }
  return ParameterSet(layout, std::move(tensors));
}

namespace {

Tensor attention_logits(const ParameterSet& p, const ModelSpec& spec,
                        const Tensor& x) {
  const std::size_t batch = x.shape()[0];
  const std::size_t len = spec.sequence_length;
  const std::size_t chunk = spec.input_dim / len;
  const std::size_t width = spec.hidden_dims[0];
  const Tensor& wq = p[0];
  const Tensor& wk = p[1];
  const Tensor& wv = p[2];
  const Tensor pool = Tensor::filled({1, len}, 1.0 / static_cast<double>(len));
  const Tensor ones = Tensor::ones({len, len});
  const double inv_sqrt_width = 1.0 / std::sqrt(static_cast<double>(width));

  std::vector<Tensor> pooled;
  pooled.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor seq = ad::slice(x, b * spec.input_dim, {len, chunk});
    const Tensor q = ad::matmul(seq, wq);
    const Tensor k = ad::matmul(seq, wk);
    const Tensor v = ad::matmul(seq, wv);
    const Tensor scores = ad::scale(ad::matmul(q, k, false, true), inv_sqrt_width);

    // Row-wise softmax; the row max is subtracted as a constant.
    std::vector<double> shift(len * len);
    const auto s = scores.values();
    for (std::size_t r = 0; r < len; ++r) {
      double mx = s[r * len];
      for (std::size_t c = 1; c < len; ++c) mx = std::max(mx, s[r * len + c]);
      std::fill_n(shift.begin() + static_cast<std::ptrdiff_t>(r * len), len, mx);
    }
    const Tensor e = ad::exp(ad::sub(scores, Tensor({len, len}, std::move(shift))));
    const Tensor weights = ad::div(e, ad::matmul(e, ones));
    pooled.push_back(ad::matmul(pool, ad::matmul(weights, v)));
  }
  const Tensor features = ad::reshape(ad::concat(pooled), {batch, width});
  return ad::add(ad::matmul(features, p[3]), p[4]);
}

}  // namespace

Tensor forward(const ParameterSet& params, const ModelSpec& spec,
               const Tensor& x) {
  if (x.shape().size() != 2 || x.shape()[1] != spec.input_dim) {
    throw ShapeError("forward: expected inputs [batch, " +
                     std::to_string(spec.input_dim) + "], got " +
                     ad::to_string(x.shape()));
  }
  if (params.layout() != make_layout(spec)) {
    throw ShapeError("forward: parameter layout does not match the model spec");
  }
  switch (spec.architecture) {
    case Architecture::logistic:
      return ad::add(ad::matmul(x, params[0]), params[1]);
    case Architecture::mlp: {
      Tensor h = x;
      const std::size_t layers = spec.hidden_dims.size();
      for (std::size_t i = 0; i < layers; ++i) {
        h = ad::tanh(ad::add(ad::matmul(h, params[2 * i]), params[2 * i + 1]));
      }
      return ad::add(ad::matmul(h, params[2 * layers]), params[2 * layers + 1]);
    }
    case Architecture::tiny_attention:
      return attention_logits(params, spec, x);
  }
  throw InvalidArgument("forward: unknown architecture");
}

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ParameterSet& params) {
  if (params.layout() != make_layout(spec)) {
    throw ShapeError("checkpoint: parameters do not match the model spec");
  }
  nlohmann::json doc;
  doc["spec"] = spec;
  doc["layout"] = params.layout();
  doc["values"] = params.flatten();
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << doc.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
    ModelSpec spec = doc.at("spec").get<ModelSpec>();
    const ParameterLayout layout = doc.at("layout").get<ParameterLayout>();
    if (layout != make_layout(spec)) {
      throw FormatError("checkpoint layout does not match its spec");
    }
    const auto values = doc.at("values").get<std::vector<double>>();
    if (values.size() != layout.total()) {
      throw FormatError("checkpoint has " + std::to_string(values.size()) +
                        " values, layout needs " + std::to_string(layout.total()));
    }
    return {std::move(spec), ParameterSet::from_flat(layout, values)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace gradguide::model
