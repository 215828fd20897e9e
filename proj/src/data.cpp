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

#include "finereward/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"
#include "finereward/rng.hpp"

namespace finereward {

namespace {

nlohmann::json feature_to_json(const FeatureVector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

FeatureVector feature_from_json(const nlohmann::json& arr,
                                const std::string& field) {
  if (!arr.is_array() || arr.empty()) {
    throw ParseError("field \"" + field + "\" must be a nonempty array");
  }
  FeatureVector v(arr.size());
  Eigen::Index i = 0;
  for (const auto& x : arr) {
    if (!x.is_number()) {
      throw ParseError("field \"" + field + "\" holds a non-numeric entry");
    }
    v[i++] = x.get<double>();
  }
  if (!v.allFinite()) {
    throw ValidationError("field \"" + field + "\" has non-finite entries");
  }
  return v;
}

nlohmann::json criteria_to_json(const CriteriaLabels& labels) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index t = 0; t < labels.s.size(); ++t) {
    if (std::isnan(labels.s[t])) {
      arr.push_back(nullptr);
    } else {
      arr.push_back(labels.s[t]);
    }
  }
  return arr;
}

CriteriaLabels criteria_from_json(const nlohmann::json& arr, int n_criteria,
                                  const std::string& field) {
  if (!arr.is_array() ||
      static_cast<int>(arr.size()) != n_criteria) {
    throw ParseError("field \"" + field + "\" must be an array of " +
                     std::to_string(n_criteria) + " entries");
  }
  CriteriaLabels labels;
  labels.s.resize(n_criteria);
  Eigen::Index t = 0;
  for (const auto& x : arr) {
    if (x.is_null()) {
      labels.s[t++] = std::numeric_limits<double>::quiet_NaN();
    } else if (x.is_number()) {
      labels.s[t++] = x.get<double>();
    } else {
      throw ParseError("field \"" + field +
                       "\" entries must be numbers or null");
    }
  }
  validate_criteria_labels(labels, field);
  return labels;
}

std::string pref_label_to_string(PrefLabel v, bool overall) {
  switch (v) {
    case PrefLabel::A:
      return "A";
    case PrefLabel::B:
      return "B";
    case PrefLabel::Same:
      return overall ? "tie" : "same";
    case PrefLabel::Missing:
      break;
  }
  return "";
}

PrefLabel pref_label_from_json(const nlohmann::json& x, bool overall,
                               const std::string& field) {
  if (x.is_null()) return PrefLabel::Missing;
  if (!x.is_string()) {
    throw ParseError("field \"" + field + "\" must be a string or null");
  }
  const std::string s = x.get<std::string>();
  if (s == "A") return PrefLabel::A;
  if (s == "B") return PrefLabel::B;
  if (s == (overall ? "tie" : "same")) return PrefLabel::Same;
  throw ParseError("field \"" + field + "\" has invalid value \"" + s + "\"");
}

}  // namespace

nlohmann::json pair_to_json(const AnnotatedPair& p) {
  nlohmann::json aspect_prefs = nlohmann::json::array();
  for (PrefLabel v : p.aspect_prefs) {
    const std::string s = pref_label_to_string(v, /*overall=*/false);
    if (s.empty()) {
      aspect_prefs.push_back(nullptr);
    } else {
      aspect_prefs.push_back(s);
    }
  }
  nlohmann::json j = {
      {"id", p.id},
      {"prompt", p.prompt ? nlohmann::json(*p.prompt) : nlohmann::json()},
      {"feature_a", feature_to_json(p.feature_a)},
      {"feature_b", feature_to_json(p.feature_b)},
      {"criteria_a", criteria_to_json(p.criteria_a)},
      {"criteria_b", criteria_to_json(p.criteria_b)},
      {"aspect_prefs", aspect_prefs},
  };
  const std::string overall = pref_label_to_string(p.overall_pref, true);
  j["overall_pref"] =
      overall.empty() ? nlohmann::json() : nlohmann::json(overall);
  return j;
}

AnnotatedPair pair_from_json(const nlohmann::json& j,
                             const CriteriaTaxonomy& t) {
  AnnotatedPair p;
  p.id = j.at("id").get<std::string>();
  if (j.contains("prompt") && !j.at("prompt").is_null()) {
    p.prompt = j.at("prompt").get<std::string>();
  }
  p.feature_a = feature_from_json(j.at("feature_a"), "feature_a");
  p.feature_b = feature_from_json(j.at("feature_b"), "feature_b");
  p.criteria_a =
      criteria_from_json(j.at("criteria_a"), t.num_criteria(), "criteria_a");
  p.criteria_b =
      criteria_from_json(j.at("criteria_b"), t.num_criteria(), "criteria_b");

  const auto& prefs = j.at("aspect_prefs");
  if (!prefs.is_array() ||
      static_cast<int>(prefs.size()) != t.num_aspects()) {
    throw ParseError("field \"aspect_prefs\" must be an array of " +
                     std::to_string(t.num_aspects()) + " entries");
  }
  for (const auto& x : prefs) {
    p.aspect_prefs.push_back(pref_label_from_json(x, false, "aspect_prefs"));
  }
  p.overall_pref =
      pref_label_from_json(j.at("overall_pref"), true, "overall_pref");

  if (p.feature_a.size() != p.feature_b.size()) {
    throw ValidationError("pair \"" + p.id +
                          "\": feature_a and feature_b have different "
                          "dimensions (" +
                          std::to_string(p.feature_a.size()) + " vs " +
                          std::to_string(p.feature_b.size()) + ")");
  }
  return p;
}

std::string dataset_header_path(const std::string& dataset_path) {
  return dataset_path + ".header.json";
}

CriteriaTaxonomy dataset_taxonomy(const std::string& dataset_path) {
  std::ifstream hf(dataset_header_path(dataset_path));
  if (hf) {
    nlohmann::json h;
    try {
      hf >> h;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(dataset_header_path(dataset_path) + ": " + e.what());
    }
    if (h.contains("taxonomy")) {
      return CriteriaTaxonomy::from_json(h.at("taxonomy"));
    }
  }
  return default_taxonomy();
}

std::vector<AnnotatedPair> load_dataset(const std::string& path,
                                        const CriteriaTaxonomy& t) {
  std::ifstream f(path);
  if (!f) {
    throw ValidationError("cannot open dataset file \"" + path + "\"");
  }

  // Validate the sidecar header when one is present.
  int header_d = -1;
  {
    std::ifstream hf(dataset_header_path(path));
    if (hf) {
      nlohmann::json h;
      try {
        hf >> h;
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(dataset_header_path(path) + ": " + e.what());
      }
      header_d = h.value("d", -1);
      const std::string hash = h.value("taxonomy_hash", "");
      if (!hash.empty() && hash != t.hash()) {
        throw ValidationError("dataset header taxonomy hash " + hash +
                              " does not match the active taxonomy " +
                              t.hash());
      }
    }
  }

  std::vector<AnnotatedPair> pairs;
  std::string line;
  int line_no = 0;
  Eigen::Index d = header_d > 0 ? header_d : -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    AnnotatedPair p;
    try {
      p = pair_from_json(j, t);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (d < 0) {
      d = p.feature_a.size();
    } else if (p.feature_a.size() != d) {
      throw ValidationError("pair \"" + p.id + "\" has feature dimension " +
                            std::to_string(p.feature_a.size()) +
                            ", expected " + std::to_string(d));
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_dataset(const std::vector<AnnotatedPair>& pairs,
                  const std::string& path, const CriteriaTaxonomy& t) {
  std::ofstream f(path);
  if (!f) {
    throw ValidationError("cannot open \"" + path + "\" for writing");
  }
  for (const auto& p : pairs) {
    f << pair_to_json(p).dump() << "\n";
  }

  nlohmann::json header = {
      {"d", pairs.empty() ? 0 : static_cast<int>(pairs[0].feature_a.size())},
      {"n_pairs", pairs.size()},
      {"taxonomy", t.to_json()},
      {"taxonomy_hash", t.hash()},
  };
  std::ofstream hf(dataset_header_path(path));
  if (!hf) {
    throw ValidationError("cannot open \"" + dataset_header_path(path) +
                          "\" for writing");
  }
  hf << header.dump(2) << "\n";
}

std::pair<std::vector<AnnotatedPair>, std::vector<AnnotatedPair>> split(
    const std::vector<AnnotatedPair>& dataset, int ratio_train, int ratio_test,
    std::uint64_t seed) {
  if (dataset.empty()) {
    throw ValidationError("cannot split an empty dataset");
  }
  if (ratio_train < 1 || ratio_test < 1) {
    throw RangeError("split ratios must be >= 1");
  }
  std::vector<std::size_t> perm(dataset.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 2));
  rng.shuffle(perm);

  const std::size_t n_train =
      dataset.size() * static_cast<std::size_t>(ratio_train) /
      static_cast<std::size_t>(ratio_train + ratio_test);
  std::pair<std::vector<AnnotatedPair>, std::vector<AnnotatedPair>> out;
  out.first.reserve(n_train);
  out.second.reserve(dataset.size() - n_train);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    (k < n_train ? out.first : out.second).push_back(dataset[perm[k]]);
  }
  return out;
}

namespace {

double quantize_label(double x) {
  if (x < 0.25) return 0.0;
  if (x < 0.75) return 0.5;
  return 1.0;
}

PrefLabel sign_with_band(double delta, double band) {
  if (std::abs(delta) <= band) return PrefLabel::Same;
  return delta > 0.0 ? PrefLabel::A : PrefLabel::B;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_pairs < 1) {
    throw RangeError("n_pairs must be >= 1");
  }
  if (spec.label_noise_sd < 0.0 || spec.tie_band < 0.0) {
    throw RangeError("label_noise_sd and tie_band must be nonnegative");
  }

  SyntheticData out;
  out.teacher = init_params(spec.taxonomy, spec.d, spec.hidden_gate,
                            spec.hidden_criteria, spec.teacher_seed);
  {
    // Non-trivial routing: replace the zero gate output weights.
    Rng rng(derive_seed(spec.teacher_seed, 1));
    auto fill = [&rng](Matrix& m) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          m(r, c) = rng.normal(0.5);
        }
      }
    };
    fill(out.teacher.tensors.aspect_gate.out.weight);
    fill(out.teacher.tensors.criteria_gate.out.weight);
  }

  const int nc = spec.taxonomy.num_criteria();
  out.pairs.reserve(static_cast<std::size_t>(spec.n_pairs));
  for (int i = 0; i < spec.n_pairs; ++i) {
    Rng rng(derive_seed(spec.data_seed,
                        0x100 + static_cast<std::uint64_t>(i)));
    AnnotatedPair p;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "synth-%06d", i);
      p.id = buf;
    }
    p.feature_a.resize(spec.d);
    p.feature_b.resize(spec.d);
    for (int k = 0; k < spec.d; ++k) p.feature_a[k] = rng.normal();
    for (int k = 0; k < spec.d; ++k) p.feature_b[k] = rng.normal();

    const HeadOutput out_a = forward(out.teacher, p.feature_a, spec.taxonomy);
    const HeadOutput out_b = forward(out.teacher, p.feature_b, spec.taxonomy);

    auto label_side = [&](const HeadOutput& o) {
      CriteriaLabels labels;
      labels.s.resize(nc);
      for (int t = 0; t < nc; ++t) {
        const double noisy = o.criteria[t] + rng.normal(spec.label_noise_sd);
        labels.s[t] = quantize_label(std::clamp(noisy, 0.0, 1.0));
      }
      return labels;
    };
    p.criteria_a = label_side(out_a);
    p.criteria_b = label_side(out_b);

    for (int a = 0; a < spec.taxonomy.num_aspects(); ++a) {
      p.aspect_prefs.push_back(sign_with_band(
          out_a.aspect_sums[a] - out_b.aspect_sums[a], spec.tie_band));
    }
    p.overall_pref = sign_with_band(out_a.os - out_b.os, spec.tie_band);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace finereward
