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

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"
#include "finereward/rng.hpp"

namespace finereward {

FreezePlan FreezePlan::defaults() {
  FreezePlan plan;
  plan.frozen_by_stage[0] = {"aspect_gate", "criteria_gate"};
  plan.frozen_by_stage[1] = {"aspect_gate"};
  plan.frozen_by_stage[2] = {};
  return plan;
}

std::array<bool, kNumParamTensors> FreezePlan::mask_for_stage(
    int stage) const {
  if (stage < 1 || stage > 3) {
    throw RangeError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  }
  std::array<bool, kNumParamTensors> mask{};
  const auto& names = param_tensor_names();
  for (const std::string& entry :
       frozen_by_stage[static_cast<std::size_t>(stage - 1)]) {
    bool matched = false;
    for (int k = 0; k < kNumParamTensors; ++k) {
      const std::string_view name = names[static_cast<std::size_t>(k)];
      if (name == entry ||
          (name.size() > entry.size() && name.starts_with(entry) &&
           name[entry.size()] == '.')) {
        mask[static_cast<std::size_t>(k)] = true;
        matched = true;
      }
    }
    if (!matched) {
      throw ValidationError("freeze plan entry \"" + entry +
                            "\" matches no parameter tensor");
    }
  }
  return mask;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw RangeError("batch_size must be >= 1");
  // base_lr == 0 is allowed: it is the documented null-update run.
  if (base_lr < 0.0) throw RangeError("base_lr must be >= 0");
  if (warmup_steps < 0) throw RangeError("warmup_steps must be >= 0");
  if (epochs_per_stage < 0) throw RangeError("epochs_per_stage must be >= 0");
  if (optimizer.beta1 <= 0.0 || optimizer.beta1 >= 1.0 ||
      optimizer.beta2 <= 0.0 || optimizer.beta2 >= 1.0) {
    throw RangeError("optimizer decay rates must lie in (0, 1)");
  }
  if (optimizer.epsilon <= 0.0) throw RangeError("epsilon must be > 0");
  if (optimizer.weight_decay < 0.0) {
    throw RangeError("weight_decay must be >= 0");
  }
  if (tie_eps < 0.0) throw RangeError("tie_eps must be >= 0");
  if (threads < 1) throw RangeError("threads must be >= 1");
  for (const StageWeights& w : stage_weights) {
    if (w.l1 < 0.0 || w.l2 < 0.0 || w.l3 < 0.0) {
      throw RangeError("stage weights must be >= 0");
    }
    if (w.l1 == 0.0 && w.l2 == 0.0 && w.l3 == 0.0) {
      throw RangeError("stage weights must not all be zero");
    }
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json weights;
  nlohmann::json freeze;
  for (int s = 1; s <= 3; ++s) {
    const auto& w = stage_weights[static_cast<std::size_t>(s - 1)];
    weights[std::to_string(s)] = {w.l1, w.l2, w.l3};
    freeze[std::to_string(s)] =
        freeze_plan.frozen_by_stage[static_cast<std::size_t>(s - 1)];
  }
  return {{"batch_size", batch_size},
          {"base_lr", base_lr},
          {"warmup_steps", warmup_steps},
          {"epochs_per_stage", epochs_per_stage},
          {"stage_weights", weights},
          {"freeze_plan", freeze},
          {"optimizer",
           {{"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"epsilon", optimizer.epsilon},
            {"weight_decay", optimizer.weight_decay}}},
          {"seed", seed},
          {"tie_eps", tie_eps},
          {"threads", threads}};
}

void TrainConfig::apply_json(const nlohmann::json& j) {
  batch_size = j.value("batch_size", batch_size);
  base_lr = j.value("base_lr", base_lr);
  warmup_steps = j.value("warmup_steps", warmup_steps);
  epochs_per_stage = j.value("epochs_per_stage", epochs_per_stage);
  seed = j.value("seed", seed);
  tie_eps = j.value("tie_eps", tie_eps);
  threads = j.value("threads", threads);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    optimizer.beta1 = o.value("beta1", optimizer.beta1);
    optimizer.beta2 = o.value("beta2", optimizer.beta2);
    optimizer.epsilon = o.value("epsilon", optimizer.epsilon);
    optimizer.weight_decay = o.value("weight_decay", optimizer.weight_decay);
  }
  if (j.contains("stage_weights")) {
    for (int s = 1; s <= 3; ++s) {
      const std::string key = std::to_string(s);
      if (!j.at("stage_weights").contains(key)) continue;
      const auto w = j.at("stage_weights").at(key).get<std::vector<double>>();
      if (w.size() != 3) {
        throw ParseError("stage_weights." + key + " must hold 3 numbers");
      }
      stage_weights[static_cast<std::size_t>(s - 1)] = {w[0], w[1], w[2]};
    }
  }
  if (j.contains("freeze_plan")) {
    for (int s = 1; s <= 3; ++s) {
      const std::string key = std::to_string(s);
      if (!j.at("freeze_plan").contains(key)) continue;
      freeze_plan.frozen_by_stage[static_cast<std::size_t>(s - 1)] =
          j.at("freeze_plan").at(key).get<std::vector<std::string>>();
    }
  }
}

double cosine_warmup_lr(int step, int total_steps, int warmup,
                        double base_lr) {
  if (step < 0 || step > total_steps || warmup < 0 || warmup > total_steps) {
    throw RangeError("cosine_warmup_lr requires 0 <= step <= total_steps and "
                     "0 <= warmup <= total_steps");
  }
  if (base_lr < 0.0) throw RangeError("base_lr must be >= 0");
  if (step < warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps == warmup) return base_lr;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamWState AdamWState::zeros_like(const RewardHeadParams& p) {
  AdamWState s;
  s.m = finereward::zeros_like(p);
  s.v = finereward::zeros_like(p);
  return s;
}

void optimizer_step(RewardHeadParams& params, const GradientSet& grads,
                    AdamWState& state, double lr, const AdamWConfig& cfg) {
  auto pviews = tensor_views(params.tensors);
  const auto gviews = tensor_views(grads);
  auto mviews = tensor_views(state.m);
  auto vviews = tensor_views(state.v);

  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    if (pviews[idx].size != gviews[idx].size) {
      throw ShapeError("gradient tensor \"" + std::string(pviews[idx].name) +
                       "\" does not match the parameter shape");
    }
    if (params.frozen[idx]) continue;

    const long t = ++state.step_count[idx];
    Eigen::Map<Eigen::ArrayXd> theta(pviews[idx].data, pviews[idx].size);
    Eigen::Map<const Eigen::ArrayXd> g(gviews[idx].data, gviews[idx].size);
    Eigen::Map<Eigen::ArrayXd> m(mviews[idx].data, mviews[idx].size);
    Eigen::Map<Eigen::ArrayXd> v(vviews[idx].data, vviews[idx].size);

    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    // Decoupled decay uses the pre-update parameter value.
    theta = theta * (1.0 - lr * cfg.weight_decay) -
            lr * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
  }
}

void TrainHistory::append(const TrainHistory& other) {
  steps.insert(steps.end(), other.steps.begin(), other.steps.end());
  for (std::size_t i = 0; i < stage_seconds.size(); ++i) {
    stage_seconds[i] += other.stage_seconds[i];
  }
}

namespace {

// Shortest round-trip decimal form, same as the JSON encoder produces.
std::string fmt(double x) { return nlohmann::json(x).dump(); }

}  // namespace

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "stage,step,lr,loss,l1,l2,l3\n";
  for (const StepRecord& r : steps) {
    out << r.stage << ',' << r.step << ',' << fmt(r.lr) << ',' << fmt(r.loss)
        << ',' << fmt(r.l1) << ',' << fmt(r.l2) << ',' << fmt(r.l3) << '\n';
  }
  return out.str();
}

nlohmann::json TrainHistory::summary() const {
  nlohmann::json stages = nlohmann::json::object();
  for (int s = 1; s <= 3; ++s) {
    const StepRecord* first = nullptr;
    const StepRecord* last = nullptr;
    int n = 0;
    for (const StepRecord& r : steps) {
      if (r.stage != s) continue;
      if (!first) first = &r;
      last = &r;
      ++n;
    }
    if (!first) continue;
    stages[std::to_string(s)] = {{"steps", n},
                                 {"first_loss", first->loss},
                                 {"final_loss", last->loss},
                                 {"seconds",
                                  stage_seconds[static_cast<std::size_t>(
                                      s - 1)]}};
  }
  return {{"total_steps", steps.size()}, {"stages", stages}};
}

TrainHistory train_stage(int stage, std::span<const AnnotatedPair> dataset,
                         RewardHeadParams& params, const TrainConfig& cfg,
                         const CriteriaTaxonomy& taxonomy) {
  cfg.validate();
  validate_stage_batch(stage, dataset);

  const auto t0 = std::chrono::steady_clock::now();
  TrainHistory history;
  if (cfg.epochs_per_stage == 0) return history;

  params.frozen = cfg.freeze_plan.mask_for_stage(stage);
  const StageWeights weights =
      cfg.stage_weights[static_cast<std::size_t>(stage - 1)];

  const std::size_t n = dataset.size();
  const int steps_per_epoch =
      static_cast<int>((n + static_cast<std::size_t>(cfg.batch_size) - 1) /
                       static_cast<std::size_t>(cfg.batch_size));
  const int total_steps = steps_per_epoch * cfg.epochs_per_stage;
  // Tiny datasets may not reach the configured warmup length.
  const int warmup = std::min(cfg.warmup_steps, total_steps);

  AdamWState state = AdamWState::zeros_like(params);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    Rng rng(derive_seed(cfg.seed,
                        static_cast<std::uint64_t>(stage) * 0x10000 +
                            static_cast<std::uint64_t>(epoch)));
    rng.shuffle(perm);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<AnnotatedPair> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(dataset[perm[k]]);
      }

      const auto [bd, grads] = loss_gradient(stage, batch, params, taxonomy,
                                             weights, cfg.threads);
      const double lr = cosine_warmup_lr(step, total_steps, warmup,
                                         cfg.base_lr);
      optimizer_step(params, grads, state, lr, cfg.optimizer);
      history.steps.push_back(
          {stage, step, lr, bd.total, bd.l1, bd.l2, bd.l3});
      ++step;
    }
  }

  history.stage_seconds[static_cast<std::size_t>(stage - 1)] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return history;
}

TrainHistory train_all(
    std::span<const AnnotatedPair> dataset, RewardHeadParams& params,
    const TrainConfig& cfg, const CriteriaTaxonomy& taxonomy,
    const std::function<void(int, const RewardHeadParams&)>& on_stage_end) {
  TrainHistory history;
  for (int stage = 1; stage <= 3; ++stage) {
    history.append(train_stage(stage, dataset, params, cfg, taxonomy));
    if (on_stage_end) on_stage_end(stage, params);
  }
  return history;
}

}  // namespace finereward
