#include "teachloop/forest/skill_forest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"

namespace teachloop::forest {

struct ForestAccess {
  static std::vector<SkillTree>& trees(SkillForest& f) { return f.trees_; }

  static SkillTree& tree(SkillForest& f, std::string_view skill) {
    for (auto& t : f.trees_) {
      if (t.skill_name == skill) return t;
    }
    throw Error(ErrorCode::kUnknownSkill, "unknown skill '" + std::string(skill) + "'");
  }
};

namespace {

SubskillNode* find_node(SkillTree& tree, std::string_view subskill) {
  for (auto& node : tree.subskills) {
    if (same_name(node.name, subskill)) return &node;
  }
  return nullptr;
}

}  // namespace

bool same_name(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

const SubskillNode* SkillTree::find(std::string_view subskill) const {
  for (const auto& node : subskills) {
    if (same_name(node.name, subskill)) return &node;
  }
  return nullptr;
}

std::int64_t SkillTree::total_allocation() const {
  return std::accumulate(subskills.begin(), subskills.end(), std::int64_t{0},
                         [](std::int64_t acc, const SubskillNode& n) { return acc + n.data_allocation; });
}

const SkillTree* SkillForest::find(std::string_view skill) const {
  for (const auto& t : trees_) {
    if (t.skill_name == skill) return &t;
  }
  return nullptr;
}

const SkillTree& SkillForest::tree(std::string_view skill) const {
  if (const auto* t = find(skill)) return *t;
  throw Error(ErrorCode::kUnknownSkill, "unknown skill '" + std::string(skill) + "'");
}

SkillForest SkillForest::with_tree(const std::string& skill, int iteration) const {
  SkillForest next = *this;
  if (!find(skill)) next.trees_.push_back(SkillTree{skill, {}, iteration});
  return next;
}

GrowResult grow_tree(const SkillForest& forest, std::string_view skill,
                     const std::vector<std::string>& new_subskill_names) {
  if (new_subskill_names.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "grow_tree needs at least one subskill name");
  }
  GrowResult result{forest, {}, {}};
  SkillTree& tree = ForestAccess::tree(result.forest, skill);
  std::vector<SubskillNode> fresh;
  for (const auto& name : new_subskill_names) {
    if (name.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "subskill names must be non-empty");
    }
    const bool clash =
        find_node(tree, name) != nullptr ||
        std::any_of(fresh.begin(), fresh.end(),
                    [&](const SubskillNode& n) { return same_name(n.name, name); });
    if (clash) {
      result.dropped_duplicates.push_back(name);
    } else {
      fresh.push_back(SubskillNode{name, 0, std::nullopt});
    }
  }
  const std::size_t cap = forest.caps().max_subskills_per_tree;
  if (tree.subskills.size() + fresh.size() > cap) {
    throw Error(ErrorCode::kSubskillCapExceeded,
                "tree '" + tree.skill_name + "' would hold " +
                    std::to_string(tree.subskills.size() + fresh.size()) +
                    " subskills; cap is " + std::to_string(cap));
  }
  for (auto& node : fresh) {
    result.added.push_back(node.name);
    tree.subskills.push_back(std::move(node));
  }
  return result;
}

SkillForest rebalance_tree(const SkillForest& forest, std::string_view skill,
                           const std::map<std::string, std::int64_t>& deltas) {
  SkillForest next = forest;
  SkillTree& tree = ForestAccess::tree(next, skill);
  const auto& caps = forest.caps();
  for (const auto& [subskill, delta] : deltas) {
    SubskillNode* node = find_node(tree, subskill);
    if (!node) {
      throw Error(ErrorCode::kUnknownSubskill,
                  "tree '" + tree.skill_name + "' has no subskill '" + subskill + "'");
    }
    if (std::llabs(delta) > caps.per_action_cap) {
      throw Error(ErrorCode::kActionCapExceeded,
                  "delta " + std::to_string(delta) + " for '" + subskill +
                      "' exceeds the per-action cap " + std::to_string(caps.per_action_cap));
    }
    const std::int64_t updated = node->data_allocation + delta;
    if (updated < 0) {
      throw Error(ErrorCode::kNegativeAllocation,
                  "allocation for '" + subskill + "' would become " + std::to_string(updated));
    }
    if (updated > caps.per_subskill_cap) {
      throw Error(ErrorCode::kAllocationCapExceeded,
                  "allocation for '" + subskill + "' would become " + std::to_string(updated) +
                      "; cap is " + std::to_string(caps.per_subskill_cap));
    }
    node->data_allocation = updated;
  }
  return next;
}

SkillForest reset_allocations(const SkillForest& forest, std::string_view skill) {
  SkillForest next = forest;
  for (auto& node : ForestAccess::tree(next, skill).subskills) node.data_allocation = 0;
  return next;
}

SkillForest set_training_performance(const SkillForest& forest, std::string_view skill,
                                     std::string_view subskill, double accuracy) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "training performance must lie in [0, 1]");
  }
  SkillForest next = forest;
  SkillTree& tree = ForestAccess::tree(next, skill);
  SubskillNode* node = find_node(tree, subskill);
  if (!node) {
    throw Error(ErrorCode::kUnknownSubskill,
                "tree '" + tree.skill_name + "' has no subskill '" + std::string(subskill) + "'");
  }
  node->training_performance = accuracy;
  return next;
}

std::vector<QuotaEntry> materialize_quota(const SkillForest& forest,
                                          const ProducedCounts& produced) {
  std::vector<QuotaEntry> quota;
  for (const auto& tree : forest.trees()) {
    for (const auto& node : tree.subskills) {
      std::int64_t done = 0;
      if (auto it = produced.find({tree.skill_name, node.name}); it != produced.end()) {
        done = it->second;
      }
      const std::int64_t count = std::max<std::int64_t>(0, node.data_allocation - done);
      if (count > 0) quota.push_back(QuotaEntry{tree.skill_name, node.name, count});
    }
  }
  return quota;
}

std::int64_t total_allocation(const SkillForest& forest) {
  std::int64_t total = 0;
  for (const auto& tree : forest.trees()) total += tree.total_allocation();
  return total;
}

std::vector<std::string> validate(const SkillForest& forest) {
  std::vector<std::string> problems;
  const auto& caps = forest.caps();
  for (std::size_t i = 0; i < forest.trees().size(); ++i) {
    const auto& tree = forest.trees()[i];
    for (std::size_t k = 0; k < i; ++k) {
      if (forest.trees()[k].skill_name == tree.skill_name) {
        problems.push_back("duplicate tree '" + tree.skill_name + "'");
      }
    }
    if (tree.subskills.size() > caps.max_subskills_per_tree) {
      problems.push_back("tree '" + tree.skill_name + "' exceeds max_subskills_per_tree");
    }
    for (std::size_t a = 0; a < tree.subskills.size(); ++a) {
      const auto& node = tree.subskills[a];
      if (node.data_allocation < 0) {
        problems.push_back("'" + node.name + "' has a negative allocation");
      }
      if (node.data_allocation > caps.per_subskill_cap) {
        problems.push_back("'" + node.name + "' exceeds per_subskill_cap");
      }
      if (node.training_performance &&
          !(*node.training_performance >= 0.0 && *node.training_performance <= 1.0)) {
        problems.push_back("'" + node.name + "' has training performance outside [0, 1]");
      }
      for (std::size_t b = 0; b < a; ++b) {
        if (same_name(tree.subskills[b].name, node.name)) {
          problems.push_back("tree '" + tree.skill_name + "' repeats subskill '" + node.name + "'");
        }
      }
    }
  }
  return problems;
}

void to_json(nlohmann::json& j, const SkillForest& forest) {
  const auto& caps = forest.caps();
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : forest.trees()) {
    nlohmann::json subskills = nlohmann::json::array();
    for (const auto& node : tree.subskills) {
      nlohmann::json n{{"name", node.name}, {"data_allocation", node.data_allocation}};
      if (node.training_performance) n["training_performance"] = *node.training_performance;
      subskills.push_back(std::move(n));
    }
    trees.push_back({{"skill", tree.skill_name},
                     {"created_at_iteration", tree.created_at_iteration},
                     {"subskills", std::move(subskills)}});
  }
  j = nlohmann::json{{"caps",
                      {{"per_action_cap", caps.per_action_cap},
                       {"per_subskill_cap", caps.per_subskill_cap},
                       {"max_subskills_per_tree", caps.max_subskills_per_tree}}},
                     {"trees", std::move(trees)}};
}

void from_json(const nlohmann::json& j, SkillForest& forest) {
  ForestCaps caps;
  if (auto it = j.find("caps"); it != j.end()) {
    caps.per_action_cap = it->value("per_action_cap", caps.per_action_cap);
    caps.per_subskill_cap = it->value("per_subskill_cap", caps.per_subskill_cap);
    caps.max_subskills_per_tree = it->value("max_subskills_per_tree", caps.max_subskills_per_tree);
  }
  SkillForest out(caps);
  auto& trees = ForestAccess::trees(out);
  for (const auto& t : j.value("trees", nlohmann::json::array())) {
    SkillTree tree{t.at("skill").get<std::string>(), {}, t.value("created_at_iteration", 0)};
    for (const auto& n : t.value("subskills", nlohmann::json::array())) {
      SubskillNode node{n.at("name").get<std::string>(), n.value("data_allocation", std::int64_t{0}),
                        std::nullopt};
      if (n.contains("training_performance") && !n["training_performance"].is_null()) {
        node.training_performance = n["training_performance"].get<double>();
      }
      tree.subskills.push_back(std::move(node));
    }
    trees.push_back(std::move(tree));
  }
  forest = std::move(out);
}

std::string digest(const SkillForest& forest) { return json_digest(nlohmann::json(forest)); }

std::string render_table(const SkillForest& forest) {
  struct Row {
    std::string skill, subskill, allocation, performance;
  };
  std::vector<Row> rows{{"skill", "subskill", "allocation", "train_acc"}};
  for (const auto& tree : forest.trees()) {
    if (tree.subskills.empty()) {
      rows.push_back({tree.skill_name, "-", "0", "-"});
      continue;
    }
    for (const auto& node : tree.subskills) {
      std::string perf = "-";
      if (node.training_performance) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.3f", *node.training_performance);
        perf = buf;
      }
      rows.push_back({tree.skill_name, node.name, std::to_string(node.data_allocation), perf});
    }
  }
  std::size_t w0 = 0, w1 = 0, w2 = 0;
  for (const auto& r : rows) {
    w0 = std::max(w0, r.skill.size());
    w1 = std::max(w1, r.subskill.size());
    w2 = std::max(w2, r.allocation.size());
  }
  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  for (const auto& r : rows) {
    out << pad(r.skill, w0) << "  " << pad(r.subskill, w1) << "  "
        << std::string(w2 - r.allocation.size(), ' ') << r.allocation << "  " << r.performance
        << '\n';
  }
  out << "total allocation: " << total_allocation(forest) << '\n';
  return out.str();
}

}  // namespace teachloop::forest
