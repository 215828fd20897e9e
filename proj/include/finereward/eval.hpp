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

#ifndef FINEREWARD_EVAL_HPP_
#define FINEREWARD_EVAL_HPP_

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "finereward/data.hpp"

namespace finereward {

enum class Quality { Good, Bad };

// The ten-word rating scale, worst to best. Ranks are 1-based; the top
// five ranks count as good.
const std::array<std::string_view, 10>& verbal_rating_scale();

struct RatingInfo {
  int rank = 0;  // 1..10
  Quality quality = Quality::Bad;
};

// Case-insensitive, whitespace-trimmed lookup. Unknown words raise
// ParseError listing the valid vocabulary.
RatingInfo map_verbal_rating(std::string_view word);

// Fraction of items whose prediction equals the label; a predicted tie
// counts as wrong. Labels must be decided (A or B).
double strict_accuracy(const std::vector<Pref>& preds,
                       const std::vector<Pref>& labels);

// Like strict_accuracy but a predicted tie earns 0.5.
double tie_aware_accuracy(const std::vector<Pref>& preds,
                          const std::vector<Pref>& labels);

struct Confusion {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
};

struct QualityMetrics {
  double acc = 0.0;
  double f1 = 0.0;  // NaN when precision+recall degenerates; shown as "/"
  Confusion confusion;
};

// Binary accuracy and F1 with positive class Good.
QualityMetrics quality_metrics(const std::vector<Quality>& pred,
                               const std::vector<Quality>& truth);

// How ground-truth "average" (0.5) criteria labels enter Acc/F1.
enum class AverageFold { Exclude, AsGood, AsBad };

struct EvalOptions {
  double tie_eps = 1e-6;
  AverageFold average_fold = AverageFold::Exclude;
  // Model-side criterion quality threshold on the [0, 1] label scale.
  double good_threshold = 0.5;
};

struct PreferenceStats {
  double strict = 0.0;
  double tie_aware = 0.0;
  long n_decided = 0;     // items entering the metrics
  long n_label_ties = 0;  // ground-truth ties, excluded and reported
};

struct CriterionReport {
  std::string name;
  int index = 0;
  int aspect_id = 0;
  QualityMetrics metrics;
  long n = 0;  // videos entering this criterion's confusion matrix
};

struct AspectReport {
  std::string name;
  int id = 0;
  PreferenceStats pref;
  QualityMetrics pooled;          // confusion pooled over the aspect's criteria
  double acc_criteria_mean = 0.0; // unweighted mean of per-criterion values
  double f1_criteria_mean = 0.0;  // NaN criteria are skipped in the mean
};

struct EvalReport {
  PreferenceStats overall;
  std::vector<AspectReport> aspects;
  std::vector<CriterionReport> criteria;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // NaN F1 rendered as "/"
};

struct PreferencePrediction {
  std::string id;
  Pref overall = Pref::Tie;
  std::vector<Pref> per_aspect;
};

// Scores every pair with score_pair and compares against the annotations.
// Ground-truth tie/same items are excluded from preference accuracy (and
// counted); criterion quality uses c[t] >= good_threshold vs the binarized
// labels.
EvalReport evaluate_model(const RewardHeadParams& params,
                          std::span<const AnnotatedPair> test_set,
                          const CriteriaTaxonomy& taxonomy,
                          const EvalOptions& options);

// External judge scores: JSONL records with a pair id, which video they
// rate, the scope (overall / one aspect / one criterion) and a rating that
// is either a scale word or an integer rank 1..10.
struct JudgeScoreRecord {
  std::string id;
  char target = 'a';  // 'a' or 'b'
  enum class Scope { Overall, Aspect, Criterion } scope = Scope::Overall;
  int index = -1;  // aspect or criterion index; unused for Overall
  int rank = 0;    // 1..10
};

std::vector<JudgeScoreRecord> load_judge_file(const std::string& path,
                                              const CriteriaTaxonomy& t);

// Preferences come from comparing the two videos' ranks per scope (equal
// ranks mean tie); criterion quality labels from the top-5/bottom-5 split.
EvalReport evaluate_judge_file(const std::string& path,
                               std::span<const AnnotatedPair> labels,
                               const CriteriaTaxonomy& taxonomy,
                               const EvalOptions& options);

}  // namespace finereward

#endif  // FINEREWARD_EVAL_HPP_
