#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace teachloop::forest {

struct SubskillNode {
  std::string name;
  std::int64_t data_allocation = 0;
  std::optional<double> training_performance;

  friend bool operator==(const SubskillNode&, const SubskillNode&) = default;
};

struct SkillTree {
  std::string skill_name;
  std::vector<SubskillNode> subskills;  // insertion order
  int created_at_iteration = 0;

  const SubskillNode* find(std::string_view subskill) const;
  std::int64_t total_allocation() const;

  friend bool operator==(const SkillTree&, const SkillTree&) = default;
};

struct ForestCaps {
  std::int64_t per_action_cap = 100;
  std::int64_t per_subskill_cap = 300;
  std::size_t max_subskills_per_tree = 5;

  friend bool operator==(const ForestCaps&, const ForestCaps&) = default;
};

/// Depth-2 curriculum: one tree per skill, subskills underneath. Values are
/// immutable in practice: every transition returns a new forest.
class SkillForest {
 public:
  SkillForest() = default;
  explicit SkillForest(ForestCaps caps) : caps_(caps) {}

  const ForestCaps& caps() const { return caps_; }
  const std::vector<SkillTree>& trees() const { return trees_; }
  bool empty() const { return trees_.empty(); }

  const SkillTree* find(std::string_view skill) const;
  const SkillTree& tree(std::string_view skill) const;  // throws kUnknownSkill

  /// Returns a forest with an empty tree appended for `skill` (no-op when present).
  SkillForest with_tree(const std::string& skill, int iteration) const;

  friend bool operator==(const SkillForest&, const SkillForest&) = default;

 private:
  friend struct ForestAccess;
  ForestCaps caps_;
  std::vector<SkillTree> trees_;  // insertion order
};

struct GrowResult {
  SkillForest forest;
  std::vector<std::string> added;
  std::vector<std::string> dropped_duplicates;
};

struct QuotaEntry {
  std::string skill;
  std::string subskill;
  std::int64_t count = 0;

  friend bool operator==(const QuotaEntry&, const QuotaEntry&) = default;
};

/// (skill, subskill) -> datums already rendered this episode.
using ProducedCounts = std::map<std::pair<std::string, std::string>, std::int64_t>;

GrowResult grow_tree(const SkillForest& forest, std::string_view skill,
                     const std::vector<std::string>& new_subskill_names);

SkillForest rebalance_tree(const SkillForest& forest, std::string_view skill,
                           const std::map<std::string, std::int64_t>& deltas);

SkillForest reset_allocations(const SkillForest& forest, std::string_view skill);

SkillForest set_training_performance(const SkillForest& forest,
                                     std::string_view skill,
                                     std::string_view subskill, double accuracy);

std::vector<QuotaEntry> materialize_quota(const SkillForest& forest,
                                          const ProducedCounts& produced = {});

std::int64_t total_allocation(const SkillForest& forest);

/// Empty when every cap and structural invariant holds; otherwise one line per violation.
std::vector<std::string> validate(const SkillForest& forest);

bool same_name(std::string_view a, std::string_view b);  // case-insensitive

void to_json(nlohmann::json& j, const SkillForest& forest);
void from_json(const nlohmann::json& j, SkillForest& forest);

std::string digest(const SkillForest& forest);

/// Aligned text table: one row per subskill with its allocation and performance.
std::string render_table(const SkillForest& forest);

}  // namespace teachloop::forest
