// Copyright 2026 The FineReward Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "finereward/reward_head.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"
#include "finereward/rng.hpp"

namespace finereward {

namespace {

TensorView view(std::string_view name, Matrix& m) {
  return TensorView{name, m.data(), m.size(), m.rows(), m.cols()};
}
TensorView view(std::string_view name, Vector& v) {
  return TensorView{name, v.data(), v.size(), v.size(), 1};
}
ConstTensorView cview(std::string_view name, const Matrix& m) {
  return ConstTensorView{name, m.data(), m.size(), m.rows(), m.cols()};
}
ConstTensorView cview(std::string_view name, const Vector& v) {
  return ConstTensorView{name, v.data(), v.size(), v.size(), 1};
}

}  // namespace

const std::array<std::string_view, kNumParamTensors>& param_tensor_names() {
  static const std::array<std::string_view, kNumParamTensors> names = {
      "score.weight",         "score.bias",
      "aspect_gate.hidden.weight",   "aspect_gate.hidden.bias",
      "aspect_gate.out.weight",      "aspect_gate.out.bias",
      "criteria_gate.hidden.weight", "criteria_gate.hidden.bias",
      "criteria_gate.out.weight",    "criteria_gate.out.bias",
  };
  return names;
}

std::array<TensorView, kNumParamTensors> tensor_views(ParamTensors& t) {
  const auto& n = param_tensor_names();
  return {view(n[0], t.score.weight),
          view(n[1], t.score.bias),
          view(n[2], t.aspect_gate.hidden.weight),
          view(n[3], t.aspect_gate.hidden.bias),
          view(n[4], t.aspect_gate.out.weight),
          view(n[5], t.aspect_gate.out.bias),
          view(n[6], t.criteria_gate.hidden.weight),
          view(n[7], t.criteria_gate.hidden.bias),
          view(n[8], t.criteria_gate.out.weight),
          view(n[9], t.criteria_gate.out.bias)};
}

std::array<ConstTensorView, kNumParamTensors> tensor_views(
    const ParamTensors& t) {
  const auto& n = param_tensor_names();
  return {cview(n[0], t.score.weight),
          cview(n[1], t.score.bias),
          cview(n[2], t.aspect_gate.hidden.weight),
          cview(n[3], t.aspect_gate.hidden.bias),
          cview(n[4], t.aspect_gate.out.weight),
          cview(n[5], t.aspect_gate.out.bias),
          cview(n[6], t.criteria_gate.hidden.weight),
          cview(n[7], t.criteria_gate.hidden.bias),
          cview(n[8], t.criteria_gate.out.weight),
          cview(n[9], t.criteria_gate.out.bias)};
}

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp();
  return e / e.sum();
}

double overall_score(const Vector& aspect_sums, const Vector& ar) {
  double os = 0.0;
  for (Eigen::Index i = 0; i < ar.size(); ++i) {
    os += aspect_sums[i] * ar[i];
  }
  return os;
}

HeadOutput forward(const RewardHeadParams& p, const FeatureVector& h,
                   const CriteriaTaxonomy& t) {
  if (h.size() != p.d) {
    throw ShapeError("feature dimension " + std::to_string(h.size()) +
                     " does not match model dimension " + std::to_string(p.d));
  }
  if (!h.allFinite()) {
    throw ValidationError("feature vector contains non-finite entries");
  }
  if (t.num_aspects() != p.num_aspects() ||
      t.num_criteria() != p.num_criteria()) {
    throw ShapeError("taxonomy (" + std::to_string(t.num_aspects()) + "x" +
                     std::to_string(t.num_criteria()) +
                     ") does not match parameter widths (" +
                     std::to_string(p.num_aspects()) + "x" +
                     std::to_string(p.num_criteria()) + ")");
  }

  const ParamTensors& w = p.tensors;

  const Vector gate_h =
      (w.aspect_gate.hidden.weight * h + w.aspect_gate.hidden.bias)
          .array()
          .tanh();
  const Vector gate_logits =
      w.aspect_gate.out.weight * gate_h + w.aspect_gate.out.bias;

  const Vector crit_h =
      (w.criteria_gate.hidden.weight * h + w.criteria_gate.hidden.bias)
          .array()
          .tanh();
  const Vector crit_logits =
      w.criteria_gate.out.weight * crit_h + w.criteria_gate.out.bias;

  const Vector raw = w.score.weight * h + w.score.bias;

  HeadOutput out;
  out.ar = softmax(gate_logits);
  out.criteria.resize(p.num_criteria());
  out.aspect_sums.resize(p.num_aspects());
  for (const AspectInfo& a : t.aspects()) {
    const Vector gates = softmax(crit_logits.segment(a.first, a.count));
    double sum = 0.0;
    for (int k = 0; k < a.count; ++k) {
      const double c = gates[k] * raw[a.first + k];
      out.criteria[a.first + k] = c;
      sum += c;
    }
    out.aspect_sums[a.id] = sum;
  }
  out.os = overall_score(out.aspect_sums, out.ar);
  return out;
}

RewardHeadParams init_params(const CriteriaTaxonomy& t, int d, int hidden_gate,
                             int hidden_criteria, std::uint64_t seed) {
  if (d < 1 || hidden_gate < 1 || hidden_criteria < 1) {
    throw RangeError("init_params requires d, hidden widths >= 1");
  }
  const int na = t.num_aspects();
  const int nc = t.num_criteria();

  RewardHeadParams p;
  p.d = d;
  p.taxonomy_hash = t.hash();

  auto gaussian = [](Rng& rng, Eigen::Index rows, Eigen::Index cols,
                     double sd) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = rng.normal(sd);
      }
    }
    return m;
  };

  Rng rng(seed);
  const double sd_in = 1.0 / std::sqrt(static_cast<double>(d));
  p.tensors.score.weight = gaussian(rng, nc, d, sd_in);
  p.tensors.score.bias = Vector::Zero(nc);
  p.tensors.aspect_gate.hidden.weight = gaussian(rng, hidden_gate, d, sd_in);
  p.tensors.aspect_gate.hidden.bias = Vector::Zero(hidden_gate);
  p.tensors.aspect_gate.out.weight = Matrix::Zero(na, hidden_gate);
  p.tensors.aspect_gate.out.bias = Vector::Zero(na);
  p.tensors.criteria_gate.hidden.weight =
      gaussian(rng, hidden_criteria, d, sd_in);
  p.tensors.criteria_gate.hidden.bias = Vector::Zero(hidden_criteria);
  p.tensors.criteria_gate.out.weight = Matrix::Zero(nc, hidden_criteria);
  p.tensors.criteria_gate.out.bias = Vector::Zero(nc);
  return p;
}

namespace {

Pref compare_scores(double lhs, double rhs, double tie_eps) {
  if (lhs - rhs > tie_eps) return Pref::A;
  if (rhs - lhs > tie_eps) return Pref::B;
  return Pref::Tie;
}

}  // namespace

PairScores score_pair(const RewardHeadParams& p, const FeatureVector& h_a,
                      const FeatureVector& h_b, const CriteriaTaxonomy& t,
                      double tie_eps) {
  if (tie_eps < 0.0) {
    throw RangeError("tie_eps must be nonnegative");
  }
  PairScores s;
  s.a = forward(p, h_a, t);
  s.b = forward(p, h_b, t);
  s.overall = compare_scores(s.a.os, s.b.os, tie_eps);
  s.aspects.resize(static_cast<std::size_t>(t.num_aspects()));
  for (int i = 0; i < t.num_aspects(); ++i) {
    s.aspects[static_cast<std::size_t>(i)] =
        compare_scores(s.a.aspect_sums[i], s.b.aspect_sums[i], tie_eps);
  }
  return s;
}

GradientSet zeros_like(const RewardHeadParams& p) {
  GradientSet g;
  const auto src = tensor_views(p.tensors);
  auto assign = [](Matrix& dst, const ConstTensorView& v) {
    dst = Matrix::Zero(v.rows, v.cols);
  };
  auto assign_vec = [](Vector& dst, const ConstTensorView& v) {
    dst = Vector::Zero(v.rows);
  };
  assign(g.score.weight, src[0]);
  assign_vec(g.score.bias, src[1]);
  assign(g.aspect_gate.hidden.weight, src[2]);
  assign_vec(g.aspect_gate.hidden.bias, src[3]);
  assign(g.aspect_gate.out.weight, src[4]);
  assign_vec(g.aspect_gate.out.bias, src[5]);
  assign(g.criteria_gate.hidden.weight, src[6]);
  assign_vec(g.criteria_gate.hidden.bias, src[7]);
  assign(g.criteria_gate.out.weight, src[8]);
  assign_vec(g.criteria_gate.out.bias, src[9]);
  return g;
}

namespace {

// Row-major flattening keeps the on-disk layout independent of Eigen's
// in-memory storage order.
std::vector<double> flatten_row_major(const ConstTensorView& v) {
  std::vector<double> flat(static_cast<std::size_t>(v.size));
  Eigen::Map<const Matrix> m(v.data, v.rows, v.cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < v.rows; ++r) {
    for (Eigen::Index c = 0; c < v.cols; ++c) {
      flat[k++] = m(r, c);
    }
  }
  return flat;
}

void unflatten_row_major(const std::vector<double>& flat, TensorView v) {
  Eigen::Map<Matrix> m(v.data, v.rows, v.cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < v.rows; ++r) {
    for (Eigen::Index c = 0; c < v.cols; ++c) {
      m(r, c) = flat[k++];
    }
  }
}

constexpr const char* kParamsFormat = "finereward-params-v1";

}  // namespace

nlohmann::json params_to_json(const RewardHeadParams& p,
                              const CriteriaTaxonomy& t) {
  if (t.hash() != p.taxonomy_hash) {
    throw ValidationError(
        "taxonomy passed to params_to_json does not match the parameters' "
        "taxonomy hash");
  }
  if (t.num_aspects() != p.num_aspects() ||
      t.num_criteria() != p.num_criteria()) {
    throw ShapeError("taxonomy widths do not match parameter widths");
  }
  nlohmann::json tensors;
  const auto views = tensor_views(p.tensors);
  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto& v = views[static_cast<std::size_t>(k)];
    tensors[std::string(v.name)] = {
        {"shape", {v.rows, v.cols}},
        {"data", flatten_row_major(v)},
        {"frozen", p.frozen[static_cast<std::size_t>(k)]},
    };
  }
  return {{"format", kParamsFormat},
          {"d", p.d},
          {"n_aspects", p.num_aspects()},
          {"n_criteria", p.num_criteria()},
          {"hidden_gate", p.hidden_gate()},
          {"hidden_criteria", p.hidden_criteria()},
          {"taxonomy", t.to_json()},
          {"taxonomy_hash", p.taxonomy_hash},
          {"tensors", tensors}};
}

LoadedParams params_from_json(const nlohmann::json& j,
                              const std::string& expected_taxonomy_hash) {
  if (j.value("format", "") != kParamsFormat) {
    throw ParseError("unrecognized parameter file format");
  }
  const int d = j.at("d").get<int>();
  const int na = j.at("n_aspects").get<int>();
  const int nc = j.at("n_criteria").get<int>();
  const int hg = j.at("hidden_gate").get<int>();
  const int hc = j.at("hidden_criteria").get<int>();
  if (d < 1 || na < 1 || nc < 1 || hg < 1 || hc < 1) {
    throw ValidationError("parameter file declares non-positive dimensions");
  }

  LoadedParams loaded{RewardHeadParams{},
                      CriteriaTaxonomy::from_json(j.at("taxonomy"))};
  RewardHeadParams& p = loaded.params;
  p.d = d;
  p.taxonomy_hash = j.at("taxonomy_hash").get<std::string>();
  if (loaded.taxonomy.hash() != p.taxonomy_hash) {
    throw ValidationError(
        "parameter file's embedded taxonomy does not match its recorded "
        "hash");
  }
  if (loaded.taxonomy.num_aspects() != na ||
      loaded.taxonomy.num_criteria() != nc) {
    throw ShapeError(
        "parameter file's taxonomy widths disagree with its declared "
        "dimensions");
  }
  if (!expected_taxonomy_hash.empty() &&
      p.taxonomy_hash != expected_taxonomy_hash) {
    throw ValidationError("parameter file was built for a different taxonomy (" +
                          p.taxonomy_hash + " vs expected " +
                          expected_taxonomy_hash + ")");
  }

  auto& t = p.tensors;
  t.score.weight.resize(nc, d);
  t.score.bias.resize(nc);
  t.aspect_gate.hidden.weight.resize(hg, d);
  t.aspect_gate.hidden.bias.resize(hg);
  t.aspect_gate.out.weight.resize(na, hg);
  t.aspect_gate.out.bias.resize(na);
  t.criteria_gate.hidden.weight.resize(hc, d);
  t.criteria_gate.hidden.bias.resize(hc);
  t.criteria_gate.out.weight.resize(nc, hc);
  t.criteria_gate.out.bias.resize(nc);

  const auto views = tensor_views(t);
  const auto& tensors = j.at("tensors");
  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto& v = views[static_cast<std::size_t>(k)];
    const std::string name(v.name);
    if (!tensors.contains(name)) {
      throw ParseError("parameter file missing tensor \"" + name + "\"");
    }
    const auto& entry = tensors.at(name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != v.rows || shape[1] != v.cols) {
      throw ShapeError("tensor \"" + name + "\" has shape inconsistent with " +
                       "declared dimensions");
    }
    const auto flat = entry.at("data").get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(v.size)) {
      throw ShapeError("tensor \"" + name + "\" has " +
                       std::to_string(flat.size()) + " values, expected " +
                       std::to_string(v.size));
    }
    for (double x : flat) {
      if (!std::isfinite(x)) {
        throw ValidationError("tensor \"" + name +
                              "\" contains non-finite values");
      }
    }
    unflatten_row_major(flat, v);
    p.frozen[static_cast<std::size_t>(k)] = entry.value("frozen", false);
  }
  return loaded;
}

void save_params(const RewardHeadParams& p, const CriteriaTaxonomy& t,
                 const std::string& path) {
  std::ofstream f(path);
  if (!f) {
    throw ValidationError("cannot open \"" + path + "\" for writing");
  }
  f << params_to_json(p, t).dump(2) << "\n";
}

LoadedParams load_params(const std::string& path,
                         const std::string& expected_taxonomy_hash) {
  std::ifstream f(path);
  if (!f) {
    throw ValidationError("cannot open parameter file \"" + path + "\"");
  }
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid JSON in \"" + path + "\": " + e.what());
  }
  return params_from_json(j, expected_taxonomy_hash);
}

}  // namespace finereward
