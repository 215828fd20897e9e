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

#ifndef FINEREWARD_TAXONOMY_HPP_
#define FINEREWARD_TAXONOMY_HPP_

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace finereward {

struct AspectInfo {
  int id = 0;
  std::string name;
  int first = 0;  // first criterion index owned by this aspect
  int count = 0;  // number of criteria; indices [first, first + count)

  bool operator==(const AspectInfo&) const = default;
};

struct CriterionInfo {
  int index = 0;  // global criterion index
  std::string name;
  int aspect_id = 0;

  bool operator==(const CriterionInfo&) const = default;
};

// Immutable aspect/criterion registry. Criterion indices are contiguous
// within an aspect and the per-aspect index sets partition 0..n_criteria-1.
// Immutable after construction; safe to share across threads.
class CriteriaTaxonomy {
 public:
  // `groups` lists aspects in order, each with its ordered criterion names.
  explicit CriteriaTaxonomy(
      std::vector<std::pair<std::string, std::vector<std::string>>> groups);

  int num_aspects() const { return static_cast<int>(aspects_.size()); }
  int num_criteria() const { return static_cast<int>(criteria_.size()); }

  const std::vector<AspectInfo>& aspects() const { return aspects_; }
  const std::vector<CriterionInfo>& criteria() const { return criteria_; }

  const AspectInfo& aspect(int aspect_id) const;
  const CriterionInfo& criterion(int index) const;

  // U_i: the criterion indices owned by aspect `aspect_id`.
  // Throws RangeError when aspect_id is out of range.
  std::vector<int> aspect_indices(int aspect_id) const;

  nlohmann::json to_json() const;
  static CriteriaTaxonomy from_json(const nlohmann::json& j);

  // FNV-1a 64 over the canonical JSON form; stable content fingerprint
  // recorded in parameter files and dataset headers.
  std::string hash() const;

  bool operator==(const CriteriaTaxonomy& other) const {
    return aspects_ == other.aspects_ && criteria_ == other.criteria_;
  }

 private:
  std::vector<AspectInfo> aspects_;
  std::vector<CriterionInfo> criteria_;
};

// The canonical 5-aspect / 28-criterion registry.
CriteriaTaxonomy default_taxonomy();

// Convenience for tests: n_aspects aspects named "a0".. with
// criteria_per_aspect criteria each, named "a<i>_c<k>".
CriteriaTaxonomy uniform_taxonomy(int n_aspects, int criteria_per_aspect);

}  // namespace finereward

#endif  // FINEREWARD_TAXONOMY_HPP_
