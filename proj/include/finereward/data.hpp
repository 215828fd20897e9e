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

#ifndef FINEREWARD_DATA_HPP_
#define FINEREWARD_DATA_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "finereward/losses.hpp"
#include "finereward/reward_head.hpp"
#include "finereward/taxonomy.hpp"

namespace finereward {

// One prompt with two candidate videos, reduced to their feature vectors
// and human annotations. aspect_prefs / overall_pref are expressed relative
// to the (a, b) order.
struct AnnotatedPair {
  std::string id;
  std::optional<std::string> prompt;
  FeatureVector feature_a;
  FeatureVector feature_b;
  CriteriaLabels criteria_a;
  CriteriaLabels criteria_b;
  std::vector<PrefLabel> aspect_prefs;
  PrefLabel overall_pref = PrefLabel::Missing;
};

// Dataset files are JSONL, one pair per line, with a sidecar header
// "<path>.header.json" recording the feature dimension and taxonomy hash.
std::string dataset_header_path(const std::string& dataset_path);

// The taxonomy embedded in the dataset's sidecar header, or the default
// registry when no header (or no embedded taxonomy) exists.
CriteriaTaxonomy dataset_taxonomy(const std::string& dataset_path);

std::vector<AnnotatedPair> load_dataset(const std::string& path,
                                        const CriteriaTaxonomy& t);
void save_dataset(const std::vector<AnnotatedPair>& pairs,
                  const std::string& path, const CriteriaTaxonomy& t);

nlohmann::json pair_to_json(const AnnotatedPair& p);
AnnotatedPair pair_from_json(const nlohmann::json& j,
                             const CriteriaTaxonomy& t);

// Seeded-permutation split; the first floor(N * ratio_train / (ratio_train +
// ratio_test)) permuted items become the training set.
std::pair<std::vector<AnnotatedPair>, std::vector<AnnotatedPair>> split(
    const std::vector<AnnotatedPair>& dataset, int ratio_train, int ratio_test,
    std::uint64_t seed);

// Recipe for a planted-teacher dataset. The teacher is drawn like
// init_params but with Gaussian(0, 0.5) gate output weights so routing and
// within-aspect gating are input-dependent; features are standard normal.
struct SyntheticSpec {
  int d = 32;
  CriteriaTaxonomy taxonomy = default_taxonomy();
  int n_pairs = 1;
  std::uint64_t teacher_seed = 0;
  std::uint64_t data_seed = 0;
  double label_noise_sd = 0.0;
  // Margins with |delta| <= tie_band become "same"/"tie". May be +infinity.
  double tie_band = 0.05;
  int hidden_gate = 64;
  int hidden_criteria = 64;
};

struct SyntheticData {
  std::vector<AnnotatedPair> pairs;
  RewardHeadParams teacher;
};

// Criteria labels are the teacher's criterion scores plus Gaussian noise,
// clipped to [0,1] and quantized to {0, 0.5, 1} at 0.25 / 0.75. Preferences
// are the signs of the teacher's aspect-sum / overall-score differences.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace finereward

#endif  // FINEREWARD_DATA_HPP_
