#include "teachloop/core/state.hpp"

#include <algorithm>

namespace teachloop {

SkillListState make_skill_list_state(const std::vector<EvaluatedPrediction>& predictions) {
  SkillListState state;
  std::map<std::string, Score> scores;
  for (const auto& p : predictions) {
    const std::string skill = p.assigned_skill.value_or("Uncategorized");
    state.per_skill[skill].predictions.push_back(p);
    scores[skill].add(p.correct);
  }
  for (auto& [skill, bucket] : state.per_skill) bucket.accuracy = scores[skill].accuracy();
  return state;
}

bool Exploit::is_noop() const {
  return std::all_of(deltas.begin(), deltas.end(), [](const auto& kv) { return kv.second == 0; });
}

std::string_view action_kind(const Action& action) {
  switch (action.index()) {
    case 0: return "generate_data";
    case 1: return "explore";
    default: return "exploit";
  }
}

}  // namespace teachloop
