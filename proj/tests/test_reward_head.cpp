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

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"
#include "finereward/rng.hpp"

using namespace finereward;

namespace {

Matrix matrix_from_json(const nlohmann::json& rows) {
  const auto r = rows.get<std::vector<std::vector<double>>>();
  Matrix m(static_cast<Eigen::Index>(r.size()),
           static_cast<Eigen::Index>(r[0].size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < r[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i][j];
    }
  }
  return m;
}

Vector vector_from_json(const nlohmann::json& vals) {
  const auto v = vals.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

FeatureVector random_feature(Rng& rng, int d) {
  FeatureVector h(d);
  for (int i = 0; i < d; ++i) h[i] = rng.normal();
  return h;
}

RewardHeadParams random_params(const CriteriaTaxonomy& t, int d,
                               std::uint64_t seed) {
  RewardHeadParams p = init_params(t, d, 8, 8, seed);
  Rng rng(derive_seed(seed, 99));
  auto fill = [&rng](Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal(0.7);
    }
  };
  auto fill_vec = [&rng](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal(0.7);
  };
  fill(p.tensors.aspect_gate.out.weight);
  fill_vec(p.tensors.aspect_gate.out.bias);
  fill(p.tensors.criteria_gate.out.weight);
  fill_vec(p.tensors.criteria_gate.out.bias);
  fill_vec(p.tensors.score.bias);
  return p;
}

}  // namespace

TEST_CASE("zero gate parameters give uniform routing and gating") {
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams p = init_params(t, 8, 4, 4, 42);
  Rng rng(7);
  const FeatureVector h = random_feature(rng, 8);
  const HeadOutput out = forward(p, h, t);

  for (int i = 0; i < 5; ++i) {
    CHECK(out.ar[i] == doctest::Approx(0.2).epsilon(1e-12));
  }
  // With f == raw and uniform within-aspect gates, c[t] = raw[t] / |U_i|.
  const Vector raw = p.tensors.score.weight * h + p.tensors.score.bias;
  for (const AspectInfo& a : t.aspects()) {
    for (int k = 0; k < a.count; ++k) {
      CHECK(out.criteria[a.first + k] ==
            doctest::Approx(raw[a.first + k] / a.count).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero scoring layer annihilates all outputs") {
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams p = random_params(t, 6, 3);
  p.tensors.score.weight.setZero();
  p.tensors.score.bias.setZero();
  Rng rng(8);
  const HeadOutput out = forward(p, random_feature(rng, 6), t);
  CHECK(out.criteria.isZero(0.0));
  CHECK(out.aspect_sums.isZero(0.0));
  CHECK(out.os == 0.0);
}

TEST_CASE("forward matches the committed numpy golden file") {
  std::ifstream f(std::string(FINEREWARD_GOLDEN_DIR) + "/forward_tiny.json");
  REQUIRE(f);
  nlohmann::json golden;
  f >> golden;

  const CriteriaTaxonomy t = uniform_taxonomy(2, 2);
  RewardHeadParams p;
  p.d = golden.at("d").get<int>();
  p.taxonomy_hash = t.hash();
  const auto& pj = golden.at("params");
  p.tensors.score.weight = matrix_from_json(pj.at("score.weight"));
  p.tensors.score.bias = vector_from_json(pj.at("score.bias"));
  p.tensors.aspect_gate.hidden.weight =
      matrix_from_json(pj.at("aspect_gate.hidden.weight"));
  p.tensors.aspect_gate.hidden.bias =
      vector_from_json(pj.at("aspect_gate.hidden.bias"));
  p.tensors.aspect_gate.out.weight =
      matrix_from_json(pj.at("aspect_gate.out.weight"));
  p.tensors.aspect_gate.out.bias =
      vector_from_json(pj.at("aspect_gate.out.bias"));
  p.tensors.criteria_gate.hidden.weight =
      matrix_from_json(pj.at("criteria_gate.hidden.weight"));
  p.tensors.criteria_gate.hidden.bias =
      vector_from_json(pj.at("criteria_gate.hidden.bias"));
  p.tensors.criteria_gate.out.weight =
      matrix_from_json(pj.at("criteria_gate.out.weight"));
  p.tensors.criteria_gate.out.bias =
      vector_from_json(pj.at("criteria_gate.out.bias"));

  const FeatureVector h = vector_from_json(golden.at("h"));
  const HeadOutput out = forward(p, h, t);

  const auto& exp = golden.at("expected");
  const Vector exp_ar = vector_from_json(exp.at("ar"));
  const Vector exp_c = vector_from_json(exp.at("criteria"));
  const Vector exp_sums = vector_from_json(exp.at("aspect_sums"));
  for (int i = 0; i < 2; ++i) {
    CHECK(out.ar[i] == doctest::Approx(exp_ar[i]).epsilon(1e-12));
    CHECK(out.aspect_sums[i] == doctest::Approx(exp_sums[i]).epsilon(1e-12));
  }
  for (int k = 0; k < 4; ++k) {
    CHECK(out.criteria[k] == doctest::Approx(exp_c[k]).epsilon(1e-12));
  }
  CHECK(out.os ==
        doctest::Approx(exp.at("os").get<double>()).epsilon(1e-12));
}

TEST_CASE("init_params is deterministic in the seed") {
  const CriteriaTaxonomy t = default_taxonomy();
  const RewardHeadParams a = init_params(t, 8, 4, 4, 42);
  const RewardHeadParams b = init_params(t, 8, 4, 4, 42);
  const RewardHeadParams c = init_params(t, 8, 4, 4, 43);

  const auto va = tensor_views(a.tensors);
  const auto vb = tensor_views(b.tensors);
  const auto vc = tensor_views(c.tensors);
  bool any_diff_seed43 = false;
  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    for (Eigen::Index i = 0; i < va[idx].size; ++i) {
      CHECK(va[idx].data[i] == vb[idx].data[i]);
      if (va[idx].data[i] != vc[idx].data[i]) any_diff_seed43 = true;
    }
  }
  CHECK(any_diff_seed43);
}

TEST_CASE("init_params validates widths") {
  const CriteriaTaxonomy t = default_taxonomy();
  CHECK_THROWS_AS(init_params(t, 0, 4, 4, 1), RangeError);
  CHECK_THROWS_AS(init_params(t, 4, 0, 4, 1), RangeError);
}

TEST_CASE("score_pair ties on identical inputs and mirrors on swap") {
  const CriteriaTaxonomy t = default_taxonomy();
  const RewardHeadParams p = random_params(t, 8, 11);
  Rng rng(12);
  const FeatureVector h = random_feature(rng, 8);

  const PairScores same = score_pair(p, h, h, t, 1e-6);
  CHECK(same.overall == Pref::Tie);
  for (Pref a : same.aspects) CHECK(a == Pref::Tie);

  for (int trial = 0; trial < 20; ++trial) {
    const FeatureVector ha = random_feature(rng, 8);
    const FeatureVector hb = random_feature(rng, 8);
    const PairScores fwd = score_pair(p, ha, hb, t, 1e-6);
    const PairScores rev = score_pair(p, hb, ha, t, 1e-6);
    auto mirrored = [](Pref x) {
      return x == Pref::A ? Pref::B : (x == Pref::B ? Pref::A : Pref::Tie);
    };
    CHECK(rev.overall == mirrored(fwd.overall));
    for (std::size_t i = 0; i < fwd.aspects.size(); ++i) {
      CHECK(rev.aspects[i] == mirrored(fwd.aspects[i]));
    }
  }
}

TEST_CASE("routing weights stay on the simplex") {
  const CriteriaTaxonomy t = default_taxonomy();
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    RewardHeadParams p = random_params(t, 8, 1000 + trial);
    const HeadOutput out = forward(p, random_feature(rng, 8), t);
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(out.ar[i] >= 0.0);
      sum += out.ar[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("within-aspect gate weights sum to one") {
  // With f frozen at 1, the gated scores are exactly the gate weights.
  const CriteriaTaxonomy t = default_taxonomy();
  Rng rng(78);
  for (int trial = 0; trial < 100; ++trial) {
    RewardHeadParams p = random_params(t, 8, 2000 + trial);
    p.tensors.score.weight.setZero();
    p.tensors.score.bias.setOnes();
    const HeadOutput out = forward(p, random_feature(rng, 8), t);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(out.aspect_sums[i] - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("overall score decomposes bit-identically") {
  const CriteriaTaxonomy t = default_taxonomy();
  Rng rng(79);
  for (int trial = 0; trial < 100; ++trial) {
    const RewardHeadParams p = random_params(t, 8, 3000 + trial);
    const HeadOutput out = forward(p, random_feature(rng, 8), t);
    CHECK(out.os == overall_score(out.aspect_sums, out.ar));
  }
}

TEST_CASE("permuting criteria within an aspect permutes outputs") {
  const CriteriaTaxonomy t = default_taxonomy();
  const RewardHeadParams p = random_params(t, 8, 5);
  Rng rng(80);
  const FeatureVector h = random_feature(rng, 8);
  const HeadOutput base = forward(p, h, t);

  // Rotate the five Alignment rows (criteria 0..4) by one.
  RewardHeadParams q = p;
  const std::array<int, 5> perm = {4, 0, 1, 2, 3};  // new row i <- old perm[i]
  for (int i = 0; i < 5; ++i) {
    q.tensors.score.weight.row(i) = p.tensors.score.weight.row(perm[i]);
    q.tensors.score.bias[i] = p.tensors.score.bias[perm[i]];
    q.tensors.criteria_gate.out.weight.row(i) =
        p.tensors.criteria_gate.out.weight.row(perm[i]);
    q.tensors.criteria_gate.out.bias[i] =
        p.tensors.criteria_gate.out.bias[perm[i]];
  }
  const HeadOutput permuted = forward(q, h, t);
  for (int i = 0; i < 5; ++i) {
    CHECK(permuted.criteria[i] ==
          doctest::Approx(base.criteria[perm[i]]).epsilon(1e-12));
  }
  for (int k = 5; k < 28; ++k) {
    CHECK(permuted.criteria[k] == base.criteria[k]);
  }
  for (int i = 0; i < 5; ++i) {
    CHECK(permuted.aspect_sums[i] ==
          doctest::Approx(base.aspect_sums[i]).epsilon(1e-12));
  }
  CHECK(permuted.os == doctest::Approx(base.os).epsilon(1e-12));
}

TEST_CASE("gate outputs are shift invariant") {
  const CriteriaTaxonomy t = default_taxonomy();
  const RewardHeadParams p = random_params(t, 8, 6);
  Rng rng(81);
  const FeatureVector h = random_feature(rng, 8);
  const HeadOutput base = forward(p, h, t);

  RewardHeadParams q = p;
  q.tensors.aspect_gate.out.bias.array() += 3.7;
  q.tensors.criteria_gate.out.bias.array() += -2.1;
  const HeadOutput shifted = forward(q, h, t);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(shifted.ar[i] - base.ar[i]) <= 1e-9);
  }
  for (int k = 0; k < 28; ++k) {
    CHECK(std::abs(shifted.criteria[k] - base.criteria[k]) <= 1e-9);
  }
}

TEST_CASE("forward rejects bad inputs") {
  const CriteriaTaxonomy t = default_taxonomy();
  const RewardHeadParams p = init_params(t, 8, 4, 4, 1);
  CHECK_THROWS_AS(forward(p, Vector::Zero(7), t), ShapeError);
  Vector bad = Vector::Zero(8);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(p, bad, t), ValidationError);
  CHECK_THROWS_AS(score_pair(p, Vector::Zero(8), Vector::Zero(8), t, -1.0),
                  RangeError);
}

TEST_CASE("parameter serialization round-trips bitwise") {
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams p = random_params(t, 8, 9);
  p.frozen[0] = true;
  p.frozen[5] = true;

  const nlohmann::json j = params_to_json(p, t);
  const LoadedParams back = params_from_json(j, t.hash());
  CHECK(back.taxonomy == t);
  CHECK(back.params.d == p.d);
  CHECK(back.params.frozen == p.frozen);

  const auto va = tensor_views(p.tensors);
  const auto vb = tensor_views(back.params.tensors);
  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    REQUIRE(va[idx].size == vb[idx].size);
    for (Eigen::Index i = 0; i < va[idx].size; ++i) {
      CHECK(va[idx].data[i] == vb[idx].data[i]);
    }
  }
}

TEST_CASE("parameter loading rejects mismatches") {
  const CriteriaTaxonomy t = default_taxonomy();
  const RewardHeadParams p = init_params(t, 8, 4, 4, 1);
  nlohmann::json j = params_to_json(p, t);

  SUBCASE("wrong expected taxonomy") {
    CHECK_THROWS_AS(params_from_json(j, uniform_taxonomy(2, 2).hash()),
                    ValidationError);
  }
  SUBCASE("truncated tensor data") {
    j["tensors"]["score.weight"]["data"].erase(0);
    CHECK_THROWS_AS(params_from_json(j, ""), ShapeError);
  }
  SUBCASE("inconsistent shape") {
    j["tensors"]["score.weight"]["shape"] = {27, 8};
    CHECK_THROWS_AS(params_from_json(j, ""), ShapeError);
  }
  SUBCASE("non-finite value") {
    j["tensors"]["score.bias"]["data"][0] = nullptr;
    CHECK_THROWS(params_from_json(j, ""));
  }
  SUBCASE("missing tensor") {
    j["tensors"].erase("aspect_gate.out.bias");
    CHECK_THROWS_AS(params_from_json(j, ""), ParseError);
  }
}
