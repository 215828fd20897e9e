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

#include "finereward/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"

namespace finereward {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string normalize_word(std::string_view word) {
  std::size_t b = 0;
  std::size_t e = word.size();
  while (b < e && std::isspace(static_cast<unsigned char>(word[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(word[e - 1]))) --e;
  std::string out;
  out.reserve(e - b);
  for (std::size_t i = b; i < e; ++i) {
    out.push_back(static_cast<char>(
        std::tolower(static_cast<unsigned char>(word[i]))));
  }
  return out;
}

}  // namespace

const std::array<std::string_view, 10>& verbal_rating_scale() {
  static const std::array<std::string_view, 10> scale = {
      "Extremely Poor", "Very Poor", "Poor",      "Below Average",
      "Average",        "Above Average", "Good",  "Very Good",
      "Excellent",      "Outstanding"};
  return scale;
}

RatingInfo map_verbal_rating(std::string_view word) {
  const std::string needle = normalize_word(word);
  const auto& scale = verbal_rating_scale();
  for (std::size_t i = 0; i < scale.size(); ++i) {
    if (needle == normalize_word(scale[i])) {
      const int rank = static_cast<int>(i) + 1;
      return {rank, rank >= 6 ? Quality::Good : Quality::Bad};
    }
  }
  std::ostringstream msg;
  msg << "unknown rating word \"" << word << "\"; valid words:";
  for (const auto& w : scale) msg << " \"" << w << "\"";
  throw ParseError(msg.str());
}

namespace {

void check_pref_inputs(const std::vector<Pref>& preds,
                       const std::vector<Pref>& labels) {
  if (preds.size() != labels.size()) {
    throw ValidationError("prediction/label lists differ in length (" +
                          std::to_string(preds.size()) + " vs " +
                          std::to_string(labels.size()) + ")");
  }
  if (preds.empty()) {
    throw ValidationError("prediction/label lists are empty");
  }
  for (Pref l : labels) {
    if (l == Pref::Tie) {
      throw ValidationError(
          "labels passed to accuracy metrics must be decided (A or B); "
          "exclude ties upstream");
    }
  }
}

}  // namespace

double strict_accuracy(const std::vector<Pref>& preds,
                       const std::vector<Pref>& labels) {
  check_pref_inputs(preds, labels);
  long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double tie_aware_accuracy(const std::vector<Pref>& preds,
                          const std::vector<Pref>& labels) {
  check_pref_inputs(preds, labels);
  double credit = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) {
      credit += 1.0;
    } else if (preds[i] == Pref::Tie) {
      credit += 0.5;
    }
  }
  return credit / static_cast<double>(preds.size());
}

namespace {

QualityMetrics metrics_from_confusion(const Confusion& c) {
  QualityMetrics m;
  m.confusion = c;
  const long total = c.total();
  m.acc = total > 0 ? static_cast<double>(c.tp + c.tn) /
                          static_cast<double>(total)
                    : kNaN;
  if (c.tp + c.fp == 0 || c.tp + c.fn == 0) {
    m.f1 = kNaN;
    return m;
  }
  const double p = static_cast<double>(c.tp) /
                   static_cast<double>(c.tp + c.fp);
  const double r = static_cast<double>(c.tp) /
                   static_cast<double>(c.tp + c.fn);
  m.f1 = (p + r == 0.0) ? kNaN : 2.0 * p * r / (p + r);
  return m;
}

}  // namespace

QualityMetrics quality_metrics(const std::vector<Quality>& pred,
                               const std::vector<Quality>& truth) {
  if (pred.size() != truth.size()) {
    throw ValidationError("prediction/label lists differ in length");
  }
  if (pred.empty()) {
    throw ValidationError("quality_metrics needs at least one item");
  }
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == Quality::Good;
    const bool t = truth[i] == Quality::Good;
    if (p && t) ++c.tp;
    if (p && !t) ++c.fp;
    if (!p && t) ++c.fn;
    if (!p && !t) ++c.tn;
  }
  return metrics_from_confusion(c);
}

namespace {

nlohmann::json json_num(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

std::string csv_num(double x) {
  if (std::isnan(x)) return "/";
  return nlohmann::json(x).dump();
}

nlohmann::json confusion_to_json(const Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

struct PrefAccumulator {
  std::vector<Pref> preds;
  std::vector<Pref> labels;
  long n_label_ties = 0;

  void add(Pref pred, PrefLabel label) {
    switch (label) {
      case PrefLabel::A:
        preds.push_back(pred);
        labels.push_back(Pref::A);
        break;
      case PrefLabel::B:
        preds.push_back(pred);
        labels.push_back(Pref::B);
        break;
      case PrefLabel::Same:
        ++n_label_ties;
        break;
      case PrefLabel::Missing:
        break;
    }
  }

  PreferenceStats stats() const {
    PreferenceStats s;
    s.n_decided = static_cast<long>(preds.size());
    s.n_label_ties = n_label_ties;
    if (preds.empty()) {
      s.strict = kNaN;
      s.tie_aware = kNaN;
    } else {
      s.strict = strict_accuracy(preds, labels);
      s.tie_aware = tie_aware_accuracy(preds, labels);
    }
    return s;
  }
};

// Shared assembly used by both the model evaluator and the judge-file
// evaluator: overall + per-aspect preference accumulators, per-criterion
// confusion matrices.
struct ReportBuilder {
  const CriteriaTaxonomy& taxonomy;
  PrefAccumulator overall;
  std::vector<PrefAccumulator> per_aspect;
  std::vector<Confusion> per_criterion;

  explicit ReportBuilder(const CriteriaTaxonomy& t)
      : taxonomy(t),
        per_aspect(static_cast<std::size_t>(t.num_aspects())),
        per_criterion(static_cast<std::size_t>(t.num_criteria())) {}

  void add_quality(int criterion, Quality pred, Quality truth) {
    Confusion& c = per_criterion[static_cast<std::size_t>(criterion)];
    const bool p = pred == Quality::Good;
    const bool t = truth == Quality::Good;
    if (p && t) ++c.tp;
    if (p && !t) ++c.fp;
    if (!p && t) ++c.fn;
    if (!p && !t) ++c.tn;
  }

  EvalReport build() const {
    EvalReport report;
    report.overall = overall.stats();
    for (const AspectInfo& a : taxonomy.aspects()) {
      AspectReport ar;
      ar.name = a.name;
      ar.id = a.id;
      ar.pref = per_aspect[static_cast<std::size_t>(a.id)].stats();

      Confusion pooled;
      double acc_sum = 0.0;
      int acc_n = 0;
      double f1_sum = 0.0;
      int f1_n = 0;
      for (int k = 0; k < a.count; ++k) {
        const Confusion& c =
            per_criterion[static_cast<std::size_t>(a.first + k)];
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn += c.fn;
        pooled.tn += c.tn;
        const QualityMetrics m = metrics_from_confusion(c);
        if (c.total() > 0) {
          acc_sum += m.acc;
          ++acc_n;
        }
        if (!std::isnan(m.f1)) {
          f1_sum += m.f1;
          ++f1_n;
        }
      }
      ar.pooled = metrics_from_confusion(pooled);
      ar.acc_criteria_mean = acc_n > 0 ? acc_sum / acc_n : kNaN;
      ar.f1_criteria_mean = f1_n > 0 ? f1_sum / f1_n : kNaN;
      report.aspects.push_back(std::move(ar));
    }
    for (const CriterionInfo& c : taxonomy.criteria()) {
      CriterionReport cr;
      cr.name = c.name;
      cr.index = c.index;
      cr.aspect_id = c.aspect_id;
      const Confusion& conf =
          per_criterion[static_cast<std::size_t>(c.index)];
      cr.metrics = metrics_from_confusion(conf);
      cr.n = conf.total();
      report.criteria.push_back(std::move(cr));
    }
    return report;
  }
};

bool binarize_truth(double label, AverageFold fold, Quality* out) {
  if (label == 1.0) {
    *out = Quality::Good;
    return true;
  }
  if (label == 0.0) {
    *out = Quality::Bad;
    return true;
  }
  // label == 0.5
  switch (fold) {
    case AverageFold::Exclude:
      return false;
    case AverageFold::AsGood:
      *out = Quality::Good;
      return true;
    case AverageFold::AsBad:
      *out = Quality::Bad;
      return true;
  }
  return false;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  auto pref_json = [](const PreferenceStats& s) {
    return nlohmann::json{{"strict", json_num(s.strict)},
                          {"tie_aware", json_num(s.tie_aware)},
                          {"n_decided", s.n_decided},
                          {"n_label_ties", s.n_label_ties}};
  };
  nlohmann::json aspects_json = nlohmann::json::array();
  for (const AspectReport& a : aspects) {
    nlohmann::json j = pref_json(a.pref);
    j["id"] = a.id;
    j["name"] = a.name;
    j["acc"] = json_num(a.pooled.acc);
    j["f1"] = json_num(a.pooled.f1);
    j["confusion"] = confusion_to_json(a.pooled.confusion);
    j["acc_criteria_mean"] = json_num(a.acc_criteria_mean);
    j["f1_criteria_mean"] = json_num(a.f1_criteria_mean);
    aspects_json.push_back(std::move(j));
  }
  nlohmann::json criteria_json = nlohmann::json::array();
  for (const CriterionReport& c : criteria) {
    criteria_json.push_back(
        {{"index", c.index},
         {"name", c.name},
         {"aspect_id", c.aspect_id},
         {"acc", json_num(c.metrics.acc)},
         {"f1", json_num(c.metrics.f1)},
         {"n", c.n},
         {"confusion", confusion_to_json(c.metrics.confusion)}});
  }
  return {{"overall", pref_json(overall)},
          {"aspects", aspects_json},
          {"criteria", criteria_json}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "level,name,aspect,strict,tie_aware,n_decided,n_label_ties,acc,f1,"
         "n,tp,fp,fn,tn\n";
  out << "overall,overall,," << csv_num(overall.strict) << ','
      << csv_num(overall.tie_aware) << ',' << overall.n_decided << ','
      << overall.n_label_ties << ",,,,,,,\n";
  for (const AspectReport& a : aspects) {
    out << "aspect," << a.name << ',' << a.name << ','
        << csv_num(a.pref.strict) << ',' << csv_num(a.pref.tie_aware) << ','
        << a.pref.n_decided << ',' << a.pref.n_label_ties << ','
        << csv_num(a.pooled.acc) << ',' << csv_num(a.pooled.f1) << ','
        << a.pooled.confusion.total() << ',' << a.pooled.confusion.tp << ','
        << a.pooled.confusion.fp << ',' << a.pooled.confusion.fn << ','
        << a.pooled.confusion.tn << "\n";
  }
  for (const CriterionReport& c : criteria) {
    out << "criterion," << c.name << ','
        << aspects[static_cast<std::size_t>(c.aspect_id)].name << ",,,,,"
        << csv_num(c.metrics.acc) << ',' << csv_num(c.metrics.f1) << ','
        << c.n << ',' << c.metrics.confusion.tp << ','
        << c.metrics.confusion.fp << ',' << c.metrics.confusion.fn << ','
        << c.metrics.confusion.tn << "\n";
  }
  return out.str();
}

EvalReport evaluate_model(const RewardHeadParams& params,
                          std::span<const AnnotatedPair> test_set,
                          const CriteriaTaxonomy& taxonomy,
                          const EvalOptions& options) {
  if (test_set.empty()) {
    throw ValidationError("test set is empty");
  }
  ReportBuilder builder(taxonomy);
  for (const AnnotatedPair& pair : test_set) {
    const PairScores s = score_pair(params, pair.feature_a, pair.feature_b,
                                    taxonomy, options.tie_eps);
    builder.overall.add(s.overall, pair.overall_pref);
    for (int i = 0; i < taxonomy.num_aspects(); ++i) {
      builder.per_aspect[static_cast<std::size_t>(i)].add(
          s.aspects[static_cast<std::size_t>(i)],
          pair.aspect_prefs[static_cast<std::size_t>(i)]);
    }
    auto add_side = [&](const HeadOutput& out, const CriteriaLabels& labels) {
      for (int t = 0; t < taxonomy.num_criteria(); ++t) {
        if (!labels.present(t)) continue;
        Quality truth;
        if (!binarize_truth(labels.s[t], options.average_fold, &truth)) {
          continue;
        }
        const Quality pred = out.criteria[t] >= options.good_threshold
                                 ? Quality::Good
                                 : Quality::Bad;
        builder.add_quality(t, pred, truth);
      }
    };
    add_side(s.a, pair.criteria_a);
    add_side(s.b, pair.criteria_b);
  }
  return builder.build();
}

std::vector<JudgeScoreRecord> load_judge_file(const std::string& path,
                                              const CriteriaTaxonomy& t) {
  std::ifstream f(path);
  if (!f) {
    throw ValidationError("cannot open judge score file \"" + path + "\"");
  }
  std::vector<JudgeScoreRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + e.what());
    }
    try {
      JudgeScoreRecord rec;
      rec.id = j.at("id").get<std::string>();
      const std::string target = j.at("target").get<std::string>();
      if (target == "a" || target == "video_a") {
        rec.target = 'a';
      } else if (target == "b" || target == "video_b") {
        rec.target = 'b';
      } else {
        throw ParseError("target must be \"a\" or \"b\", got \"" + target +
                         "\"");
      }
      const std::string scope = j.at("scope").get<std::string>();
      if (scope == "overall") {
        rec.scope = JudgeScoreRecord::Scope::Overall;
      } else if (scope == "aspect") {
        rec.scope = JudgeScoreRecord::Scope::Aspect;
        rec.index = j.at("index").get<int>();
        if (rec.index < 0 || rec.index >= t.num_aspects()) {
          throw ParseError("aspect index " + std::to_string(rec.index) +
                           " out of range");
        }
      } else if (scope == "criterion") {
        rec.scope = JudgeScoreRecord::Scope::Criterion;
        rec.index = j.at("index").get<int>();
        if (rec.index < 0 || rec.index >= t.num_criteria()) {
          throw ParseError("criterion index " + std::to_string(rec.index) +
                           " out of range");
        }
      } else {
        throw ParseError("scope must be overall, aspect or criterion");
      }
      const auto& rating = j.at("rating");
      if (rating.is_string()) {
        rec.rank = map_verbal_rating(rating.get<std::string>()).rank;
      } else if (rating.is_number_integer()) {
        rec.rank = rating.get<int>();
        if (rec.rank < 1 || rec.rank > 10) {
          throw ParseError("integer rating must lie in 1..10, got " +
                           std::to_string(rec.rank));
        }
      } else {
        throw ParseError("rating must be a scale word or an integer 1..10");
      }
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + e.what());
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
  }
  return records;
}

EvalReport evaluate_judge_file(const std::string& path,
                               std::span<const AnnotatedPair> labels,
                               const CriteriaTaxonomy& taxonomy,
                               const EvalOptions& options) {
  if (labels.empty()) {
    throw ValidationError("labels dataset is empty");
  }
  const std::vector<JudgeScoreRecord> records =
      load_judge_file(path, taxonomy);

  std::map<std::string, const AnnotatedPair*> by_id;
  for (const AnnotatedPair& p : labels) by_id[p.id] = &p;

  // (id, scope, index) -> rank per side.
  struct SideRanks {
    int a = 0;
    int b = 0;  // 0 = unrated
  };
  std::map<std::tuple<std::string, int, int>, SideRanks> table;
  for (const JudgeScoreRecord& rec : records) {
    if (!by_id.count(rec.id)) {
      throw ValidationError("judge file references unknown pair id \"" +
                            rec.id + "\"");
    }
    auto& entry = table[{rec.id, static_cast<int>(rec.scope), rec.index}];
    (rec.target == 'a' ? entry.a : entry.b) = rec.rank;
  }

  ReportBuilder builder(taxonomy);
  for (const auto& [key, ranks] : table) {
    const auto& [id, scope_int, index] = key;
    const AnnotatedPair& pair = *by_id.at(id);
    const auto scope = static_cast<JudgeScoreRecord::Scope>(scope_int);
    if (scope == JudgeScoreRecord::Scope::Criterion) {
      auto add_side = [&](int rank, const CriteriaLabels& truth_labels) {
        if (rank == 0 || !truth_labels.present(index)) return;
        Quality truth;
        if (!binarize_truth(truth_labels.s[index], options.average_fold,
                            &truth)) {
          return;
        }
        builder.add_quality(index,
                            rank >= 6 ? Quality::Good : Quality::Bad, truth);
      };
      add_side(ranks.a, pair.criteria_a);
      add_side(ranks.b, pair.criteria_b);
      continue;
    }
    if (ranks.a == 0 || ranks.b == 0) continue;  // needs both sides
    const Pref pred = ranks.a > ranks.b   ? Pref::A
                      : ranks.b > ranks.a ? Pref::B
                                          : Pref::Tie;
    if (scope == JudgeScoreRecord::Scope::Overall) {
      builder.overall.add(pred, pair.overall_pref);
    } else {
      builder.per_aspect[static_cast<std::size_t>(index)].add(
          pred, pair.aspect_prefs[static_cast<std::size_t>(index)]);
    }
  }
  return builder.build();
}

}  // namespace finereward
