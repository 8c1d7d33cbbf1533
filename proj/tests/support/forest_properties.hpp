#pragma once

// Random legal (and occasionally illegal) action sequences against the skill
// forest, checking conservation, caps, subskill-set immutability under Exploit
// and digest-stable replay.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "teachloop/core/error.hpp"
#include "teachloop/forest/skill_forest.hpp"

namespace teachloop::testing {

struct ForestPropertyReport {
  std::int64_t sequences = 0;
  std::int64_t actions = 0;
  std::int64_t rejected = 0;  // illegal actions that were correctly refused
  std::int64_t violations = 0;
  std::vector<std::string> examples;  // first few violations
};

namespace detail {

struct ForestStep {
  enum Kind { kGrow, kRebalance, kReset } kind;
  std::string skill;
  std::vector<std::string> names;
  std::map<std::string, std::int64_t> deltas;
};

inline forest::SkillForest apply_step(const forest::SkillForest& f, const ForestStep& s) {
  switch (s.kind) {
    case ForestStep::kGrow: return forest::grow_tree(f, s.skill, s.names).forest;
    case ForestStep::kRebalance: return forest::rebalance_tree(f, s.skill, s.deltas);
    case ForestStep::kReset: return forest::reset_allocations(f, s.skill);
  }
  return f;
}

inline std::vector<std::string> names_of(const forest::SkillTree& t) {
  std::vector<std::string> out;
  for (const auto& s : t.subskills) out.push_back(s.name);
  return out;
}

}  // namespace detail

inline ForestPropertyReport check_forest_properties(std::uint64_t seed, int sequences, int max_length = 30) {
  using detail::ForestStep;
  ForestPropertyReport report;
  std::mt19937_64 rng(seed);
  auto below = [&](std::int64_t n) { return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n)); };
  auto violation = [&](const std::string& what) {
    ++report.violations;
    if (report.examples.size() < 5) report.examples.push_back(what);
  };

  for (int seq = 0; seq < sequences; ++seq) {
    ++report.sequences;
    forest::ForestCaps caps{1 + below(150), 1 + below(400), static_cast<std::size_t>(1 + below(6))};
    forest::SkillForest initial(caps);
    const int trees = 1 + static_cast<int>(below(4));
    for (int t = 0; t < trees; ++t) initial = initial.with_tree("skill" + std::to_string(t), 0);

    forest::SkillForest current = initial;
    std::vector<ForestStep> steps;
    std::vector<std::string> digests;
    int fresh = 0;
    const int length = 1 + static_cast<int>(below(max_length));
    for (int a = 0; a < length; ++a) {
      ++report.actions;
      const auto& tree = current.trees()[static_cast<std::size_t>(below(trees))];
      const auto before_total = forest::total_allocation(current);
      const auto roll = below(10);
      const std::size_t room = caps.max_subskills_per_tree - tree.subskills.size();

      if (roll == 0) {
        // Illegal: one unit past a cap. The forest must refuse and stay put.
        ForestStep bad{ForestStep::kRebalance, tree.skill_name, {}, {}};
        if (tree.subskills.empty() || below(2) == 0) {
          bad.kind = ForestStep::kGrow;
          for (std::size_t i = 0; i <= room; ++i) bad.names.push_back("x" + std::to_string(fresh++));
        } else {
          const auto& sub = tree.subskills[static_cast<std::size_t>(below(static_cast<std::int64_t>(tree.subskills.size())))];
          bad.deltas[sub.name] = below(2) == 0 ? -(sub.data_allocation + 1)
                                               : std::min(caps.per_action_cap, caps.per_subskill_cap - sub.data_allocation) + 1;
        }
        const auto snapshot = forest::digest(current);
        try {
          detail::apply_step(current, bad);
          violation("illegal action accepted on " + tree.skill_name);
        } catch (const Error&) {
          ++report.rejected;
        }
        if (forest::digest(current) != snapshot) violation("refused action changed the forest");
        continue;
      }

      ForestStep step{ForestStep::kRebalance, tree.skill_name, {}, {}};
      if (roll <= 3 && room > 0) {
        step.kind = ForestStep::kGrow;
        const auto k = 1 + below(static_cast<std::int64_t>(room));
        for (std::int64_t i = 0; i < k; ++i) step.names.push_back("sub" + std::to_string(fresh++));
      } else if (roll == 4) {
        step.kind = ForestStep::kReset;
      } else {
        for (const auto& sub : tree.subskills) {
          if (below(3) == 0) continue;
          const auto lo = std::max(-sub.data_allocation, -caps.per_action_cap);
          const auto hi = std::min(caps.per_subskill_cap - sub.data_allocation, caps.per_action_cap);
          step.deltas[sub.name] = lo + below(hi - lo + 1);
        }
      }

      forest::SkillForest next;
      try {
        next = detail::apply_step(current, step);
      } catch (const Error& e) {
        violation(std::string("legal action refused: ") + e.what());
        continue;
      }
      const auto& after_tree = next.tree(tree.skill_name);
      std::int64_t delta_sum = 0;
      for (const auto& [_, d] : step.deltas) delta_sum += d;
      switch (step.kind) {
        case ForestStep::kRebalance:
          if (forest::total_allocation(next) - before_total != delta_sum) violation("allocation not conserved");
          if (detail::names_of(after_tree) != detail::names_of(tree)) violation("exploit changed the subskill set");
          for (const auto& sub : after_tree.subskills) {
            const auto it = step.deltas.find(sub.name);
            const auto expected = tree.find(sub.name)->data_allocation + (it == step.deltas.end() ? 0 : it->second);
            if (sub.data_allocation != expected) violation("delta applied incorrectly to " + sub.name);
          }
          break;
        case ForestStep::kGrow: {
          auto expected = detail::names_of(tree);
          expected.insert(expected.end(), step.names.begin(), step.names.end());
          if (detail::names_of(after_tree) != expected) violation("explore did not append the new subskills");
          if (after_tree.total_allocation() != tree.total_allocation()) violation("explore moved allocation");
          break;
        }
        case ForestStep::kReset:
          if (after_tree.total_allocation() != 0) violation("reset left allocation behind");
          if (detail::names_of(after_tree) != detail::names_of(tree)) violation("reset changed the subskill set");
          break;
      }
      for (const auto& other : current.trees()) {
        if (other.skill_name != tree.skill_name && *next.find(other.skill_name) != other) {
          violation("action touched another tree");
        }
      }
      for (const auto& problem : forest::validate(next)) violation("cap violated: " + problem);
      current = std::move(next);
      steps.push_back(step);
      digests.push_back(forest::digest(current));
    }

    forest::SkillForest replayed = initial;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      replayed = detail::apply_step(replayed, steps[i]);
      if (forest::digest(replayed) != digests[i]) {
        violation("replay diverged at step " + std::to_string(i));
        break;
      }
    }
  }
  return report;
}

}  // namespace teachloop::testing
