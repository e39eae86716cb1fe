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

#include "gradguide/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "gradguide/error.hpp"
#include "gradguide/random.hpp"

namespace gradguide::tasks {

namespace {

constexpr std::uint64_t kPlaneStream = 1;
constexpr std::uint64_t kSourceStream = 2;
constexpr std::uint64_t kTargetStream = 3;
constexpr std::uint64_t kSplitStream = 4;

void validate_gaussian(const GaussianTaskSpec& spec) {
  if (spec.dim < 2) throw InvalidArgument("gaussian task: dim must be >= 2");
  if (spec.class_count < 2) {
    throw InvalidArgument("gaussian task: class_count must be >= 2");
  }
  if (spec.n_per_class < 1) {
    throw InvalidArgument("gaussian task: n_per_class must be >= 1");
  }
  if (!(spec.separation >= 0.0) || !std::isfinite(spec.separation)) {
    throw InvalidArgument("gaussian task: separation must be finite and >= 0");
  }
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
    throw InvalidArgument("gaussian task: noise_std must be finite and >= 0");
  }
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Orthonormal pair spanning the seeded plane.
std::pair<std::vector<double>, std::vector<double>> plane(std::size_t dim,
                                                          std::uint64_t seed) {
  Rng rng = Rng::stream(seed, kPlaneStream);
  auto draw = [&] {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return v;
  };
  std::vector<double> u = draw();
  while (norm(u) < 1e-8) u = draw();
  const double nu = norm(u);
  for (double& x : u) x /= nu;
  for (;;) {
    std::vector<double> v = draw();
    double proj = 0.0;
    for (std::size_t i = 0; i < dim; ++i) proj += u[i] * v[i];
    for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * u[i];
    const double nv = norm(v);
    if (nv < 1e-8) continue;
    for (double& x : v) x /= nv;
    return {std::move(u), std::move(v)};
  }
}

}  // namespace

autodiff::Tensor TaskDataset::input_tensor() const {
  return autodiff::Tensor({size(), input_dim}, inputs);
}

std::shared_ptr<const std::vector<int>> TaskDataset::shared_labels() const {
  return std::make_shared<const std::vector<int>>(labels);
}

std::vector<std::size_t> TaskDataset::class_counts() const {
  std::vector<std::size_t> counts(class_count, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

TaskDataset TaskDataset::subset(std::span<const std::size_t> indices) const {
  TaskDataset out;
  out.name = name;
  out.input_dim = input_dim;
  out.class_count = class_count;
  out.provenance = provenance;
  out.inputs.reserve(indices.size() * input_dim);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset: index out of range");
    const auto r = row(i);
    out.inputs.insert(out.inputs.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

void TaskDataset::validate() const {
  if (input_dim == 0) throw InvalidArgument("dataset " + name + ": input_dim is 0");
  if (inputs.size() != labels.size() * input_dim) {
    throw InvalidArgument("dataset " + name + ": input/label count mismatch");
  }
  for (double x : inputs) {
    if (!std::isfinite(x)) {
      throw InvalidArgument("dataset " + name + ": non-finite input");
    }
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
      throw InvalidArgument("dataset " + name + ": label " + std::to_string(y) +
                            " out of range");
    }
  }
}

std::vector<std::vector<double>> class_means(const GaussianTaskSpec& spec,
                                             double rotation_deg) {
  validate_gaussian(spec);
  const auto [u, v] = plane(spec.dim, spec.seed);
  const double rotation = rotation_deg * std::numbers::pi / 180.0;
  std::vector<std::vector<double>> means(spec.class_count,
                                         std::vector<double>(spec.dim));
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(spec.class_count) +
                         rotation;
    const double cu = spec.separation * std::cos(angle);
    const double cv = spec.separation * std::sin(angle);
    for (std::size_t i = 0; i < spec.dim; ++i) {
      means[c][i] = cu * u[i] + cv * v[i];
    }
  }
  return means;
}

TaskDataset make_rotated_gaussian_task(const GaussianTaskSpec& spec,
                                       double rotation_deg,
                                       std::uint64_t sample_stream) {
  const auto means = class_means(spec, rotation_deg);
  Rng rng = Rng::stream(spec.seed, sample_stream);
  TaskDataset data;
  data.input_dim = spec.dim;
  data.class_count = spec.class_count;
  data.inputs.reserve(spec.class_count * spec.n_per_class * spec.dim);
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    for (std::size_t n = 0; n < spec.n_per_class; ++n) {
      for (std::size_t i = 0; i < spec.dim; ++i) {
        data.inputs.push_back(means[c][i] + spec.noise_std * rng.normal());
      }
      data.labels.push_back(static_cast<int>(c));
    }
  }
  std::ostringstream prov;
  prov << "gaussian(dim=" << spec.dim << ", k=" << spec.class_count
       << ", n=" << spec.n_per_class << ", separation=" << spec.separation
       << ", noise=" << spec.noise_std << ", seed=" << spec.seed
       << ", rotation=" << rotation_deg << ")";
  data.provenance = prov.str();
  data.name = "gaussian";
  return data;
}

TaskDataset make_gaussian_task(const GaussianTaskSpec& spec) {
  return make_rotated_gaussian_task(spec, 0.0, kSourceStream);
}

void TaskPairSpec::validate() const {
  validate_gaussian(base());
  if (!(conflict_angle_deg >= 0.0 && conflict_angle_deg <= 180.0)) {
    throw InvalidArgument("task pair: conflict angle must lie in [0, 180]");
  }
}

std::pair<TaskDataset, TaskDataset> make_task_pair(const TaskPairSpec& spec) {
  spec.validate();
  TaskDataset source = make_rotated_gaussian_task(spec.base(), 0.0, kSourceStream);
  TaskDataset target = make_rotated_gaussian_task(
      spec.base(), spec.conflict_angle_deg, kTargetStream);
  source.name = "source";
  target.name = "target";
  return {std::move(source), std::move(target)};
}

Split few_shot_split(const TaskDataset& dataset, std::size_t shots_per_class,
                     double eval_fraction, std::uint64_t seed) {
  dataset.validate();
  if (shots_per_class < 1) throw InvalidArgument("split: shots must be >= 1");
  if (!(eval_fraction > 0.0 && eval_fraction <= 1.0)) {
    throw InvalidArgument("split: eval_fraction must lie in (0, 1]");
  }
  std::vector<std::vector<std::size_t>> by_class(dataset.class_count);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  Rng rng = Rng::stream(seed, kSplitStream);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> eval_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < shots_per_class + 1) {
      throw InvalidArgument("split: class " + std::to_string(c) + " has " +
                            std::to_string(idx.size()) + " examples, need " +
                            std::to_string(shots_per_class + 1));
    }
    rng.shuffle(idx);
    train_idx.insert(train_idx.end(), idx.begin(),
                     idx.begin() + static_cast<std::ptrdiff_t>(shots_per_class));
    const std::size_t remaining = idx.size() - shots_per_class;
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(
            std::llround(eval_fraction * static_cast<double>(remaining))),
        1, remaining);
    eval_idx.insert(eval_idx.end(),
                    idx.begin() + static_cast<std::ptrdiff_t>(shots_per_class),
                    idx.begin() + static_cast<std::ptrdiff_t>(shots_per_class + take));
  }
  rng.shuffle(train_idx);
  Split split{dataset.subset(train_idx), dataset.subset(eval_idx)};
  split.train.name = dataset.name + "/train";
  split.eval.name = dataset.name + "/eval";
  return split;
}

TaskDataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  TaskDataset data;
  data.name = path.stem().string();
  data.provenance = path.string();
  int max_label = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object() || !obj.contains("x") || !obj.contains("y")) {
      throw FormatError("expected an object with fields \"x\" and \"y\"", line_no);
    }
    const auto& x = obj["x"];
    const auto& y = obj["y"];
    if (!x.is_array() || x.empty()) {
      throw FormatError("\"x\" must be a nonempty array of numbers", line_no);
    }
    if (!y.is_number_integer()) {
      throw FormatError("\"y\" must be an integer", line_no);
    }
    if (data.input_dim == 0) {
      data.input_dim = x.size();
    } else if (x.size() != data.input_dim) {
      throw FormatError("\"x\" has " + std::to_string(x.size()) +
                            " entries, expected " + std::to_string(data.input_dim),
                        line_no);
    }
    for (const auto& v : x) {
      if (!v.is_number()) throw FormatError("\"x\" entries must be numbers", line_no);
      data.inputs.push_back(v.get<double>());
    }
    const auto label = y.get<long long>();
    if (label < 0) throw FormatError("negative label", line_no);
    if (label > 1'000'000) throw FormatError("label too large", line_no);
    data.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  if (data.labels.empty()) throw FormatError("dataset " + path.string() + " is empty");
  data.class_count = static_cast<std::size_t>(max_label) + 1;
  data.validate();
  return data;
}

void save_jsonl(const std::filesystem::path& path, const TaskDataset& dataset) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path.string());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto r = dataset.row(i);
    nlohmann::json obj;
    obj["x"] = std::vector<double>(r.begin(), r.end());
    obj["y"] = dataset.labels[i];
    out << obj.dump() << '\n';
  }
}

}  // namespace gradguide::tasks
