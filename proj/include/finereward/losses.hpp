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

#ifndef FINEREWARD_LOSSES_HPP_
#define FINEREWARD_LOSSES_HPP_

#include <cmath>
#include <vector>

#include "finereward/reward_head.hpp"

namespace finereward {

// Per-criterion targets on the {0, 0.5, 1} lattice (bad / average / good).
// NaN marks a criterion without an annotation.
struct CriteriaLabels {
  Vector s;

  bool present(int t) const { return !std::isnan(s[t]); }
  int present_count() const {
    int n = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (!std::isnan(s[i])) ++n;
    }
    return n;
  }
};

// Throws ValidationError unless every present entry is exactly 0, 0.5 or 1.
void validate_criteria_labels(const CriteriaLabels& labels,
                              const std::string& context);

// Annotated verdicts. For aspect preferences "Same" means the annotator saw
// no difference; for the overall preference the same state is spelled "tie"
// on disk. Missing means the field was not annotated.
enum class PrefLabel { A, B, Same, Missing };

// Per-loss weights; the stage presets live in default_stage_weights().
struct StageWeights {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

StageWeights default_stage_weights(int stage);

// -log(sigmoid(x)), evaluated without overflow for large |x|.
inline double neg_log_sigmoid(double x) {
  if (x >= 0.0) {
    return std::log1p(std::exp(-x));
  }
  return -x + std::log1p(std::exp(x));
}

// Sum over present criteria of (C[t] - s[t])^2, accumulated in criterion
// order. Missing criteria contribute nothing.
double criteria_loss(const HeadOutput& out, const CriteriaLabels& labels);

// Sum over decided aspects (verdict A or B) of -log(sigmoid(I_i * margin_i))
// with margin_i = aspect_sums_1[i] - aspect_sums_2[i] and I_i = +1 when the
// first candidate is preferred. Same/Missing aspects are skipped.
double aspect_ranking_loss(const HeadOutput& out_1, const HeadOutput& out_2,
                           const std::vector<PrefLabel>& pref);

// -log(sigmoid(os_w - os_l)) for an already-ordered (winner, loser) pair.
double overall_ranking_loss(const HeadOutput& out_w, const HeadOutput& out_l);

}  // namespace finereward

#endif  // FINEREWARD_LOSSES_HPP_
