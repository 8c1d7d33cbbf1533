#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "teachloop/core/types.hpp"
#include "teachloop/forest/skill_forest.hpp"

namespace teachloop {

struct OpenEndedState {
  std::vector<EvaluatedPrediction> predictions;

  friend bool operator==(const OpenEndedState&, const OpenEndedState&) = default;
};

struct SkillBucket {
  std::vector<EvaluatedPrediction> predictions;
  double accuracy = 0.0;

  friend bool operator==(const SkillBucket&, const SkillBucket&) = default;
};

struct SkillListState {
  std::map<std::string, SkillBucket> per_skill;

  friend bool operator==(const SkillListState&, const SkillListState&) = default;
};

struct SkillTreeState {
  forest::SkillForest forest;
  std::map<std::string, double> per_skill_accuracy;

  friend bool operator==(const SkillTreeState&, const SkillTreeState&) = default;
};

using State = std::variant<OpenEndedState, SkillListState, SkillTreeState>;

/// Groups predictions by assigned skill; accuracy is the exact mean of correctness.
SkillListState make_skill_list_state(const std::vector<EvaluatedPrediction>& predictions);

struct GenerateData {
  std::vector<DataSpec> specs;

  friend bool operator==(const GenerateData&, const GenerateData&) = default;
};

struct Explore {
  std::string skill;
  int num_new_subskills = 1;

  friend bool operator==(const Explore&, const Explore&) = default;
};

struct Exploit {
  std::string skill;
  std::map<std::string, std::int64_t> deltas;

  bool is_noop() const;

  friend bool operator==(const Exploit&, const Exploit&) = default;
};

using Action = std::variant<GenerateData, Explore, Exploit>;

std::string_view action_kind(const Action& action);

}  // namespace teachloop
