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

#ifndef FINEREWARD_REWARD_HEAD_HPP_
#define FINEREWARD_REWARD_HEAD_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "finereward/taxonomy.hpp"

namespace finereward {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Feature vectors arrive precomputed from some upstream encoder; the head
// never sees raw media.
using FeatureVector = Eigen::VectorXd;

// y = weight * x + bias
struct AffineLayer {
  Matrix weight;
  Vector bias;
};

// One tanh hidden layer followed by an affine output.
struct TwoLayerMlp {
  AffineLayer hidden;
  AffineLayer out;
};

// The ten learnable tensors of the head. Also reused as gradient / moment
// storage, where each field holds the corresponding derivative or moment.
struct ParamTensors {
  AffineLayer score;          // f: d -> n_criteria
  TwoLayerMlp aspect_gate;    // g: d -> n_aspects
  TwoLayerMlp criteria_gate;  // g': d -> n_criteria
};

using GradientSet = ParamTensors;

inline constexpr int kNumParamTensors = 10;

// Fixed tensor order used everywhere (freeze flags, optimizer state,
// serialization, gradient checks).
const std::array<std::string_view, kNumParamTensors>& param_tensor_names();

struct TensorView {
  std::string_view name;
  double* data;
  Eigen::Index size;
  Eigen::Index rows;
  Eigen::Index cols;
};

struct ConstTensorView {
  std::string_view name;
  const double* data;
  Eigen::Index size;
  Eigen::Index rows;
  Eigen::Index cols;
};

std::array<TensorView, kNumParamTensors> tensor_views(ParamTensors& t);
std::array<ConstTensorView, kNumParamTensors> tensor_views(
    const ParamTensors& t);

struct RewardHeadParams {
  int d = 0;
  ParamTensors tensors;
  // Per-tensor freeze flags, indexed like param_tensor_names().
  std::array<bool, kNumParamTensors> frozen{};
  // Fingerprint of the taxonomy the output widths were sized for.
  std::string taxonomy_hash;

  int num_aspects() const {
    return static_cast<int>(tensors.aspect_gate.out.bias.size());
  }
  int num_criteria() const {
    return static_cast<int>(tensors.score.bias.size());
  }
  int hidden_gate() const {
    return static_cast<int>(tensors.aspect_gate.hidden.bias.size());
  }
  int hidden_criteria() const {
    return static_cast<int>(tensors.criteria_gate.hidden.bias.size());
  }
};

struct HeadOutput {
  Vector ar;           // aspect routing weights, simplex over aspects
  Vector criteria;     // gated criterion scores C
  Vector aspect_sums;  // per-aspect sum of C
  double os = 0.0;     // overall score
};

enum class Pref { A, B, Tie };

struct PairScores {
  HeadOutput a;
  HeadOutput b;
  Pref overall = Pref::Tie;
  std::vector<Pref> aspects;
};

// Numerically stable softmax (max-subtracted).
Vector softmax(const Vector& z);

// Dot product accumulated in index order. forward() computes OS through
// this exact routine, so recomputing it from a HeadOutput is bit-identical.
double overall_score(const Vector& aspect_sums, const Vector& ar);

// The two stacked gating layers over a feature vector:
//   ar      = softmax(g(h))
//   C[U_i]  = softmax(g'(h)[U_i]) .* f(h)[U_i]   per aspect i
//   sums[i] = sum_{t in U_i} C[t]
//   os      = sum_i sums[i] * ar[i]
// Throws ShapeError on dimension mismatch, ValidationError on non-finite h.
HeadOutput forward(const RewardHeadParams& p, const FeatureVector& h,
                   const CriteriaTaxonomy& t);

// Gaussian(0, 1/sqrt(fan_in)) for the score and gate hidden weights; gate
// output weights and every bias start at zero, so routing and within-aspect
// gating are uniform until trained. Deterministic in seed.
RewardHeadParams init_params(const CriteriaTaxonomy& t, int d, int hidden_gate,
                             int hidden_criteria, std::uint64_t seed);

// Scores both candidates and derives overall / per-aspect preferences with
// a |margin| <= tie_eps tie band.
PairScores score_pair(const RewardHeadParams& p, const FeatureVector& h_a,
                      const FeatureVector& h_b, const CriteriaTaxonomy& t,
                      double tie_eps);

GradientSet zeros_like(const RewardHeadParams& p);

// Parameter (de)serialization: dims, row-major flat tensors, freeze flags,
// the taxonomy and its hash. Loading validates shape consistency, the
// embedded taxonomy's fingerprint and, when `expected_taxonomy_hash` is
// non-empty, that the file matches the caller's taxonomy.
struct LoadedParams {
  RewardHeadParams params;
  CriteriaTaxonomy taxonomy;
};

nlohmann::json params_to_json(const RewardHeadParams& p,
                              const CriteriaTaxonomy& t);
LoadedParams params_from_json(const nlohmann::json& j,
                              const std::string& expected_taxonomy_hash = "");
void save_params(const RewardHeadParams& p, const CriteriaTaxonomy& t,
                 const std::string& path);
LoadedParams load_params(const std::string& path,
                         const std::string& expected_taxonomy_hash = "");

}  // namespace finereward

#endif  // FINEREWARD_REWARD_HEAD_HPP_
