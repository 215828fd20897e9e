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

#include "finereward/taxonomy.hpp"

#include <cstdint>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"

namespace finereward {

CriteriaTaxonomy::CriteriaTaxonomy(
    std::vector<std::pair<std::string, std::vector<std::string>>> groups) {
  if (groups.empty()) {
    throw ValidationError("taxonomy needs at least one aspect");
  }
  int next = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& [name, names] = groups[i];
    if (names.empty()) {
      throw ValidationError("aspect \"" + name + "\" has no criteria");
    }
    AspectInfo a;
    a.id = static_cast<int>(i);
    a.name = name;
    a.first = next;
    a.count = static_cast<int>(names.size());
    aspects_.push_back(a);
    for (const auto& cname : names) {
      criteria_.push_back(CriterionInfo{next++, cname, a.id});
    }
  }
}

const AspectInfo& CriteriaTaxonomy::aspect(int aspect_id) const {
  if (aspect_id < 0 || aspect_id >= num_aspects()) {
    throw RangeError("aspect id " + std::to_string(aspect_id) +
                     " out of range [0, " + std::to_string(num_aspects()) +
                     ")");
  }
  return aspects_[static_cast<std::size_t>(aspect_id)];
}

const CriterionInfo& CriteriaTaxonomy::criterion(int index) const {
  if (index < 0 || index >= num_criteria()) {
    throw RangeError("criterion index " + std::to_string(index) +
                     " out of range [0, " + std::to_string(num_criteria()) +
                     ")");
  }
  return criteria_[static_cast<std::size_t>(index)];
}

std::vector<int> CriteriaTaxonomy::aspect_indices(int aspect_id) const {
  const AspectInfo& a = aspect(aspect_id);
  std::vector<int> idx(static_cast<std::size_t>(a.count));
  std::iota(idx.begin(), idx.end(), a.first);
  return idx;
}

nlohmann::json CriteriaTaxonomy::to_json() const {
  nlohmann::json aspects = nlohmann::json::array();
  for (const auto& a : aspects_) {
    aspects.push_back({{"id", a.id},
                       {"name", a.name},
                       {"first", a.first},
                       {"count", a.count}});
  }
  nlohmann::json criteria = nlohmann::json::array();
  for (const auto& c : criteria_) {
    criteria.push_back(
        {{"index", c.index}, {"name", c.name}, {"aspect_id", c.aspect_id}});
  }
  return {{"aspects", aspects}, {"criteria", criteria}};
}

CriteriaTaxonomy CriteriaTaxonomy::from_json(const nlohmann::json& j) {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (const auto& a : j.at("aspects")) {
    groups.emplace_back(a.at("name").get<std::string>(),
                        std::vector<std::string>{});
  }
  for (const auto& c : j.at("criteria")) {
    const int aid = c.at("aspect_id").get<int>();
    if (aid < 0 || aid >= static_cast<int>(groups.size())) {
      throw ParseError("criterion \"" + c.at("name").get<std::string>() +
                       "\" references unknown aspect id " +
                       std::to_string(aid));
    }
    groups[static_cast<std::size_t>(aid)].second.push_back(
        c.at("name").get<std::string>());
  }
  CriteriaTaxonomy t(std::move(groups));
  if (t.to_json() != j) {
    throw ParseError("taxonomy JSON is not in canonical form");
  }
  return t;
}

std::string CriteriaTaxonomy::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[2 + 16 + 1];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

CriteriaTaxonomy default_taxonomy() {
  return CriteriaTaxonomy({
      {"Alignment", {"object", "attribute", "actions", "count", "location"}},
      {"Safety",
       {"crime", "shocking", "disgust", "nsfw_evasive", "nsfw_subtle",
        "political_sensitivity"}},
      {"Fineness",
       {"human_face_distortion", "human_limb_distortion", "object_distortion",
        "defocused_blurred", "motion_blurred"}},
      {"Coherence & Consistency",
       {"spatial_consistency", "action_continuity", "object_disappearance",
        "abrupt_background_changes", "inconsistent_lighting_shadows",
        "frame_flickering", "object_drift"}},
      {"Bias & Fairness", {"gender", "age", "job", "race", "education"}},
  });
}

CriteriaTaxonomy uniform_taxonomy(int n_aspects, int criteria_per_aspect) {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (int i = 0; i < n_aspects; ++i) {
    std::vector<std::string> names;
    for (int k = 0; k < criteria_per_aspect; ++k) {
      names.push_back("a" + std::to_string(i) + "_c" + std::to_string(k));
    }
    groups.emplace_back("a" + std::to_string(i), std::move(names));
  }
  return CriteriaTaxonomy(std::move(groups));
}

}  // namespace finereward
