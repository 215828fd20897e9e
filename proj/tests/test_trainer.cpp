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

#include "finereward/trainer.hpp"

#include <cmath>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"
#include "finereward/rng.hpp"

using namespace finereward;

namespace {

bool params_equal(const RewardHeadParams& a, const RewardHeadParams& b) {
  const auto va = tensor_views(a.tensors);
  const auto vb = tensor_views(b.tensors);
  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    if (va[idx].size != vb[idx].size) return false;
    for (Eigen::Index i = 0; i < va[idx].size; ++i) {
      if (va[idx].data[i] != vb[idx].data[i]) return false;
    }
  }
  return true;
}

bool tensor_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

SyntheticData training_fixture(int n_pairs, std::uint64_t seed, int d = 8) {
  SyntheticSpec spec;
  spec.d = d;
  spec.n_pairs = n_pairs;
  spec.teacher_seed = seed;
  spec.data_seed = seed + 1;
  spec.label_noise_sd = 0.05;
  spec.tie_band = 0.05;
  spec.hidden_gate = 8;
  spec.hidden_criteria = 8;
  return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("cosine warmup schedule endpoints") {
  CHECK(cosine_warmup_lr(0, 200, 25, 3e-5) == 0.0);
  CHECK(cosine_warmup_lr(25, 200, 25, 3e-5) == 3e-5);
  CHECK(std::abs(cosine_warmup_lr(200, 200, 25, 3e-5)) <= 1e-12);

  // Non-increasing after warmup.
  double prev = cosine_warmup_lr(25, 200, 25, 3e-5);
  for (int s = 26; s <= 200; ++s) {
    const double lr = cosine_warmup_lr(s, 200, 25, 3e-5);
    CHECK(lr <= prev);
    prev = lr;
  }

  CHECK_THROWS_AS(cosine_warmup_lr(-1, 200, 25, 3e-5), RangeError);
  CHECK_THROWS_AS(cosine_warmup_lr(201, 200, 25, 3e-5), RangeError);
  CHECK_THROWS_AS(cosine_warmup_lr(5, 200, 300, 3e-5), RangeError);
  CHECK(cosine_warmup_lr(10, 10, 10, 1.0) == 1.0);  // all-warmup degenerate
}

TEST_CASE("optimizer null update advances only the step counter") {
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams p = init_params(t, 4, 4, 4, 3);
  const RewardHeadParams before = p;
  AdamWState state = AdamWState::zeros_like(p);
  const GradientSet zero = zeros_like(p);

  optimizer_step(p, zero, state, 0.1, AdamWConfig{});
  CHECK(params_equal(p, before));
  for (long c : state.step_count) CHECK(c == 1);
}

TEST_CASE("optimizer degenerate decay rates give a sign update") {
  // Single-coordinate check with beta1 = beta2 = 0: theta' =
  // -lr * g / (|g| + eps) evaluated at theta = 0, g = 1.
  const CriteriaTaxonomy t = uniform_taxonomy(1, 1);
  RewardHeadParams p = init_params(t, 1, 1, 1, 0);
  p.tensors.score.weight(0, 0) = 0.0;
  GradientSet g = zeros_like(p);
  g.score.weight(0, 0) = 1.0;
  AdamWState state = AdamWState::zeros_like(p);
  AdamWConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.epsilon = 1e-8;
  cfg.weight_decay = 0.0;

  optimizer_step(p, g, state, 0.1, cfg);
  const double expected = -0.1 * (1.0 / (1.0 + 1e-8));
  CHECK(p.tensors.score.weight(0, 0) == doctest::Approx(expected));
  CHECK(p.tensors.score.weight(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("frozen tensors ignore injected gradients") {
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams p = init_params(t, 4, 4, 4, 3);
  p.frozen[0] = true;
  const Matrix before = p.tensors.score.weight;
  GradientSet g = zeros_like(p);
  g.score.weight.setConstant(123.0);
  AdamWState state = AdamWState::zeros_like(p);
  optimizer_step(p, g, state, 0.1, AdamWConfig{});
  CHECK(tensor_equal(p.tensors.score.weight, before));
  CHECK(state.step_count[0] == 0);
}

TEST_CASE("optimizer rejects mismatched gradient shapes") {
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams p = init_params(t, 4, 4, 4, 3);
  const RewardHeadParams other = init_params(t, 5, 4, 4, 3);
  const GradientSet g = zeros_like(other);
  AdamWState state = AdamWState::zeros_like(p);
  CHECK_THROWS_AS(optimizer_step(p, g, state, 0.1, AdamWConfig{}), ShapeError);
}

TEST_CASE("stage 1 training fits the criteria scores") {
  SyntheticSpec spec;
  spec.d = 32;
  spec.n_pairs = 2000;
  spec.teacher_seed = 95115;
  spec.data_seed = 7000;
  spec.label_noise_sd = 0.02;
  spec.tie_band = 0.05;
  spec.hidden_gate = 1;
  spec.hidden_criteria = 1;
  const SyntheticData data = generate_synthetic(spec);

  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams params = init_params(t, 32, 16, 16, derive_seed(1, 1));
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.base_lr = 0.02;
  cfg.warmup_steps = 9;
  cfg.epochs_per_stage = 3;
  cfg.seed = 1;

  const TrainHistory history = train_stage(1, data.pairs, params, cfg, t);
  REQUIRE(!history.steps.empty());
  const double first = history.steps.front().l1;
  const double last = history.steps.back().l1;
  CHECK(last < first);
  CHECK(last < 0.25 * first);
}

TEST_CASE("zero learning rate is a null training run") {
  const SyntheticData data = training_fixture(30, 51);
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams params = init_params(t, 8, 4, 4, 7);
  const RewardHeadParams before = params;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.base_lr = 0.0;
  cfg.warmup_steps = 0;
  cfg.epochs_per_stage = 2;

  train_stage(1, data.pairs, params, cfg, t);
  CHECK(params_equal(params, before));
}

TEST_CASE("training is deterministic in the seed") {
  const SyntheticData data = training_fixture(60, 52);
  const CriteriaTaxonomy t = default_taxonomy();
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.base_lr = 0.01;
  cfg.warmup_steps = 2;
  cfg.epochs_per_stage = 2;
  cfg.seed = 42;

  RewardHeadParams p1 = init_params(t, 8, 4, 4, 9);
  RewardHeadParams p2 = init_params(t, 8, 4, 4, 9);
  const TrainHistory h1 = train_all(data.pairs, p1, cfg, t);
  const TrainHistory h2 = train_all(data.pairs, p2, cfg, t);

  CHECK(params_equal(p1, p2));
  REQUIRE(h1.steps.size() == h2.steps.size());
  for (std::size_t i = 0; i < h1.steps.size(); ++i) {
    CHECK(h1.steps[i].loss == h2.steps[i].loss);
    CHECK(h1.steps[i].lr == h2.steps[i].lr);
  }
}

TEST_CASE("zero epochs leave parameters at initialization") {
  const SyntheticData data = training_fixture(20, 53);
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams params = init_params(t, 8, 4, 4, 10);
  const RewardHeadParams before = params;
  TrainConfig cfg;
  cfg.epochs_per_stage = 0;

  const TrainHistory history = train_all(data.pairs, params, cfg, t);
  CHECK(history.steps.empty());
  CHECK(params_equal(params, before));
}

TEST_CASE("per-stage freeze masks hold tensors bit-identical") {
  const SyntheticData data = training_fixture(60, 54);
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams params = init_params(t, 8, 8, 8, 11);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.base_lr = 0.05;
  cfg.warmup_steps = 2;
  cfg.epochs_per_stage = 1;

  SUBCASE("stage 1 freezes both gates") {
    const ParamTensors before = params.tensors;
    train_stage(1, data.pairs, params, cfg, t);
    CHECK(tensor_equal(params.tensors.aspect_gate.hidden.weight,
                       before.aspect_gate.hidden.weight));
    CHECK(tensor_equal(params.tensors.aspect_gate.out.weight,
                       before.aspect_gate.out.weight));
    CHECK(tensor_equal(params.tensors.criteria_gate.hidden.weight,
                       before.criteria_gate.hidden.weight));
    CHECK(tensor_equal(params.tensors.criteria_gate.out.weight,
                       before.criteria_gate.out.weight));
    CHECK(!tensor_equal(params.tensors.score.weight, before.score.weight));
  }
  SUBCASE("stage 2 freezes the aspect gate only") {
    const ParamTensors before = params.tensors;
    train_stage(2, data.pairs, params, cfg, t);
    CHECK(tensor_equal(params.tensors.aspect_gate.hidden.weight,
                       before.aspect_gate.hidden.weight));
    CHECK(tensor_equal(params.tensors.aspect_gate.out.weight,
                       before.aspect_gate.out.weight));
    CHECK(!tensor_equal(params.tensors.criteria_gate.out.weight,
                        before.criteria_gate.out.weight));
  }
  SUBCASE("stage 3 trains everything") {
    const ParamTensors before = params.tensors;
    train_stage(3, data.pairs, params, cfg, t);
    CHECK(!tensor_equal(params.tensors.aspect_gate.out.weight,
                        before.aspect_gate.out.weight));
  }
}

TEST_CASE("train_all reports missing aspect preferences at stage 2") {
  SyntheticData data = training_fixture(12, 55);
  for (AnnotatedPair& p : data.pairs) {
    p.aspect_prefs.assign(5, PrefLabel::Missing);
  }
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams params = init_params(t, 8, 4, 4, 12);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs_per_stage = 1;
  cfg.base_lr = 0.01;
  cfg.warmup_steps = 0;

  try {
    train_all(data.pairs, params, cfg, t);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("aspect_prefs") != std::string::npos);
  }
}

TEST_CASE("history CSV carries one row per step") {
  const SyntheticData data = training_fixture(20, 56);
  const CriteriaTaxonomy t = default_taxonomy();
  RewardHeadParams params = init_params(t, 8, 4, 4, 13);
  TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.base_lr = 0.01;
  cfg.warmup_steps = 1;
  cfg.epochs_per_stage = 2;

  const TrainHistory history = train_all(data.pairs, params, cfg, t);
  const std::string csv = history.to_csv();
  const std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == history.steps.size() + 1);  // header + steps
  CHECK(csv.rfind("stage,step,lr,loss,l1,l2,l3\n", 0) == 0);

  // Step indices restart and strictly increase within each stage.
  int prev_stage = 0;
  int prev_step = -1;
  for (const StepRecord& r : history.steps) {
    if (r.stage != prev_stage) {
      CHECK(r.step == 0);
      prev_stage = r.stage;
    } else {
      CHECK(r.step == prev_step + 1);
    }
    prev_step = r.step;
  }
}

TEST_CASE("TrainConfig JSON round-trip and overrides") {
  TrainConfig cfg;
  cfg.batch_size = 17;
  cfg.base_lr = 0.123;
  cfg.stage_weights[2] = {0.5, 0.5, 1.0};
  cfg.freeze_plan.frozen_by_stage[0] = {"score.bias"};

  TrainConfig other;
  other.apply_json(cfg.to_json());
  CHECK(other.batch_size == 17);
  CHECK(other.base_lr == 0.123);
  CHECK(other.stage_weights[2].l1 == 0.5);
  CHECK(other.freeze_plan.frozen_by_stage[0] ==
        std::vector<std::string>{"score.bias"});

  // Partial override keeps everything else.
  other.apply_json(nlohmann::json{{"batch_size", 4}});
  CHECK(other.batch_size == 4);
  CHECK(other.base_lr == 0.123);

  CHECK_THROWS_AS(
      [] {
        TrainConfig c;
        c.batch_size = 0;
        c.validate();
      }(),
      RangeError);

  FreezePlan plan;
  plan.frozen_by_stage[0] = {"no_such_tensor"};
  CHECK_THROWS_AS(plan.mask_for_stage(1), ValidationError);
}
