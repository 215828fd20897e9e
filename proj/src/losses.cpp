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

#include "finereward/losses.hpp"

#include <string>

#include "finereward/errors.hpp"

namespace finereward {

void validate_criteria_labels(const CriteriaLabels& labels,
                              const std::string& context) {
  for (Eigen::Index t = 0; t < labels.s.size(); ++t) {
    const double v = labels.s[t];
    if (std::isnan(v)) continue;
    if (v != 0.0 && v != 0.5 && v != 1.0) {
      throw ValidationError(context + ": criteria label at index " +
                            std::to_string(t) + " is " + std::to_string(v) +
                            ", expected 0, 0.5, 1 or null");
    }
  }
}

StageWeights default_stage_weights(int stage) {
  switch (stage) {
    case 1:
      return {1.0, 0.0, 0.0};
    case 2:
      return {0.3, 1.0, 0.0};
    case 3:
      return {0.3, 0.3, 1.0};
    default:
      throw RangeError("stage must be 1, 2 or 3, got " +
                       std::to_string(stage));
  }
}

double criteria_loss(const HeadOutput& out, const CriteriaLabels& labels) {
  if (labels.s.size() != out.criteria.size()) {
    throw ShapeError("criteria label vector has size " +
                     std::to_string(labels.s.size()) + ", output has " +
                     std::to_string(out.criteria.size()));
  }
  double loss = 0.0;
  for (Eigen::Index t = 0; t < labels.s.size(); ++t) {
    if (!labels.present(static_cast<int>(t))) continue;
    const double r = out.criteria[t] - labels.s[t];
    loss += r * r;
  }
  return loss;
}

double aspect_ranking_loss(const HeadOutput& out_1, const HeadOutput& out_2,
                           const std::vector<PrefLabel>& pref) {
  const Eigen::Index n = out_1.aspect_sums.size();
  if (out_2.aspect_sums.size() != n ||
      static_cast<Eigen::Index>(pref.size()) != n) {
    throw ShapeError("aspect preference vector does not match aspect count");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const PrefLabel v = pref[static_cast<std::size_t>(i)];
    if (v == PrefLabel::Same || v == PrefLabel::Missing) continue;
    const double sign = (v == PrefLabel::A) ? 1.0 : -1.0;
    loss += neg_log_sigmoid(sign *
                            (out_1.aspect_sums[i] - out_2.aspect_sums[i]));
  }
  return loss;
}

double overall_ranking_loss(const HeadOutput& out_w, const HeadOutput& out_l) {
  return neg_log_sigmoid(out_w.os - out_l.os);
}

}  // namespace finereward
