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

#ifndef FINEREWARD_TRAINER_HPP_
#define FINEREWARD_TRAINER_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "finereward/gradients.hpp"

namespace finereward {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Tensor names (or the prefixes "score", "aspect_gate", "criteria_gate")
// frozen during each stage. Defaults: stage 1 trains the scoring layer only,
// stage 2 additionally the criteria gate, stage 3 everything.
struct FreezePlan {
  std::array<std::vector<std::string>, 3> frozen_by_stage;

  static FreezePlan defaults();
  // Resolves stage's entries to per-tensor flags. Unknown names throw
  // ValidationError.
  std::array<bool, kNumParamTensors> mask_for_stage(int stage) const;
};

struct TrainConfig {
  int batch_size = 64;
  double base_lr = 3e-5;
  int warmup_steps = 25;
  int epochs_per_stage = 3;
  std::array<StageWeights, 3> stage_weights = {
      StageWeights{1.0, 0.0, 0.0},
      StageWeights{0.3, 1.0, 0.0},
      StageWeights{0.3, 0.3, 1.0},
  };
  FreezePlan freeze_plan = FreezePlan::defaults();
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  double tie_eps = 1e-6;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  // Fields absent from `j` keep their current values, so overrides can be
  // layered (defaults <- config file <- CLI flags).
  void apply_json(const nlohmann::json& j);
};

// Linear warmup to base_lr over [0, warmup), then cosine decay to 0 at
// total_steps. lr(warmup) == base_lr exactly.
double cosine_warmup_lr(int step, int total_steps, int warmup, double base_lr);

// Per-tensor AdamW state; moments live only for tensors that have been
// stepped at least once unfrozen.
struct AdamWState {
  GradientSet m;
  GradientSet v;
  std::array<long, kNumParamTensors> step_count{};

  static AdamWState zeros_like(const RewardHeadParams& p);
};

// Decoupled-weight-decay adaptive-moment update with bias correction.
// Frozen tensors (and their moments) are left untouched.
void optimizer_step(RewardHeadParams& params, const GradientSet& grads,
                    AdamWState& state, double lr, const AdamWConfig& cfg);

struct StepRecord {
  int stage = 0;
  int step = 0;  // 0-based within the stage
  double lr = 0.0;
  double loss = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::array<double, 3> stage_seconds{};

  void append(const TrainHistory& other);
  std::string to_csv() const;  // header: stage,step,lr,loss,l1,l2,l3
  nlohmann::json summary() const;
};

// One stage: epochs_per_stage epochs of seeded-shuffled mini-batches with
// the stage's freeze mask, stage weights, fresh optimizer state and a fresh
// warmup+cosine schedule. Mutates `params`; returns the per-step history.
TrainHistory train_stage(int stage, std::span<const AnnotatedPair> dataset,
                         RewardHeadParams& params, const TrainConfig& cfg,
                         const CriteriaTaxonomy& taxonomy);

// Stages 1 -> 2 -> 3. `on_stage_end` (optional) observes the parameters at
// each stage boundary, e.g. for checkpointing.
TrainHistory train_all(
    std::span<const AnnotatedPair> dataset, RewardHeadParams& params,
    const TrainConfig& cfg, const CriteriaTaxonomy& taxonomy,
    const std::function<void(int, const RewardHeadParams&)>& on_stage_end =
        {});

}  // namespace finereward

#endif  // FINEREWARD_TRAINER_HPP_
