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

#ifndef FINEREWARD_GRADIENTS_HPP_
#define FINEREWARD_GRADIENTS_HPP_

#include <functional>
#include <span>
#include <string>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "finereward/data.hpp"
#include "finereward/losses.hpp"

namespace finereward {

// Weighted stage objective over a batch. Each term is the mean over its own
// contributing items: L1 over video sides with at least one present criteria
// label, L2 over pairs with at least one decided aspect, L3 over pairs with
// a decided overall preference. Terms without contributors evaluate to 0.
//
// Reduction order is fixed: pairs in batch order, side a before side b,
// aspects ascending, criteria ascending. Both stage_loss and loss_gradient
// run the same accumulation, so their loss values are bit-identical.
struct StageLossBreakdown {
  double total = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  int l1_items = 0;
  int l2_items = 0;
  int l3_items = 0;
};

// Throws ValidationError (listing offending pair ids) when a batch item
// lacks the stage's required labels: criteria labels for stage 1, aspect
// preferences for stage 2, an overall preference for stage 3.
void validate_stage_batch(int stage, std::span<const AnnotatedPair> batch);

StageLossBreakdown stage_loss(int stage, std::span<const AnnotatedPair> batch,
                              const RewardHeadParams& params,
                              const CriteriaTaxonomy& taxonomy,
                              const StageWeights& weights, int threads = 1);

// Same objective plus its exact derivative with respect to every unfrozen
// tensor; frozen tensors come back all-zero.
std::pair<StageLossBreakdown, GradientSet> loss_gradient(
    int stage, std::span<const AnnotatedPair> batch,
    const RewardHeadParams& params, const CriteriaTaxonomy& taxonomy,
    const StageWeights& weights, int threads = 1);

struct FiniteDiffReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::string worst_tensor;  // coordinate with the largest relative error
  long worst_index = -1;     // flat (column-major) index within that tensor
  long checked = 0;          // unfrozen coordinates compared
  long skipped_frozen = 0;

  nlohmann::json to_json() const;
};

// Central-difference comparison for every unfrozen coordinate. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as denominator. Refuses (as
// RangeError) when the parameter count exceeds `max_params`.
//
// `tamper_analytic` is a test hook that corrupts the analytic gradient
// before comparison, proving the check can detect an injected fault.
FiniteDiffReport finite_diff_check(
    int stage, const RewardHeadParams& params,
    std::span<const AnnotatedPair> batch, const CriteriaTaxonomy& taxonomy,
    const StageWeights& weights, double h_step = 1e-5, long max_params = 20000,
    const std::function<void(GradientSet&)>& tamper_analytic = {});

}  // namespace finereward

#endif  // FINEREWARD_GRADIENTS_HPP_
