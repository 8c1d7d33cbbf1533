#include <gtest/gtest.h>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/rng.hpp"
#include "teachloop/forest/skill_forest.hpp"
#include "support/forest_properties.hpp"

namespace teachloop::forest {
namespace {

SkillForest forest_with(const std::map<std::string, std::vector<std::pair<std::string, std::int64_t>>>& spec,
                        ForestCaps caps = {}) {
  SkillForest f(caps);
  for (const auto& [skill, nodes] : spec) {
    f = f.with_tree(skill, 0);
    if (nodes.empty()) continue;
    std::vector<std::string> names;
    for (const auto& [name, alloc] : nodes) names.push_back(name);
    f = grow_tree(f, skill, names).forest;
    std::map<std::string, std::int64_t> deltas;
    for (const auto& [name, alloc] : nodes) deltas[name] = alloc;
    // Build allocations in per-action steps so large values respect the action cap.
    bool remaining = true;
    while (remaining) {
      remaining = false;
      std::map<std::string, std::int64_t> step;
      for (auto& [name, left] : deltas) {
        const auto d = std::min(left, caps.per_action_cap);
        step[name] = d;
        left -= d;
        remaining = remaining || left > 0;
      }
      f = rebalance_tree(f, skill, step);
    }
  }
  return f;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kInvalidArgument;
}

TEST(GrowTree, AddsZeroAllocationSubskills) {
  auto f = SkillForest().with_tree("Algebra", 0);
  auto result = grow_tree(f, "Algebra", {"Solving Linear Equations", "Polynomial Factorization"});
  const auto& tree = result.forest.tree("Algebra");
  ASSERT_EQ(tree.subskills.size(), 2u);
  EXPECT_EQ(tree.subskills[0].name, "Solving Linear Equations");
  EXPECT_EQ(tree.subskills[1].name, "Polynomial Factorization");
  for (const auto& node : tree.subskills) {
    EXPECT_EQ(node.data_allocation, 0);
    EXPECT_FALSE(node.training_performance.has_value());
  }
  EXPECT_TRUE(result.dropped_duplicates.empty());
}

TEST(GrowTree, DuplicateNamesAreDroppedAndReported) {
  auto f = forest_with({{"S", {{"X", 0}}}});
  auto result = grow_tree(f, "S", {"X"});
  EXPECT_EQ(result.forest, f);
  EXPECT_EQ(result.dropped_duplicates, (std::vector<std::string>{"X"}));

  auto mixed = grow_tree(f, "S", {"x", "Y", "y"});
  EXPECT_EQ(mixed.added, (std::vector<std::string>{"Y"}));
  EXPECT_EQ(mixed.dropped_duplicates, (std::vector<std::string>{"x", "y"}));
}

TEST(GrowTree, ExceedingTheSubskillCapIsAnError) {
  ForestCaps caps;
  caps.max_subskills_per_tree = 6;
  auto f = forest_with({{"S", {{"a", 0}, {"b", 0}, {"c", 0}}}}, caps);
  std::string message;
  try {
    grow_tree(f, "S", {"d", "e", "f", "g", "h"});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSubskillCapExceeded);
    message = e.what();
  }
  EXPECT_NE(message.find("'S'"), std::string::npos);
  EXPECT_NE(message.find("6"), std::string::npos);
  // 3 + 3 == 6 is still legal
  EXPECT_EQ(grow_tree(f, "S", {"d", "e", "f"}).forest.tree("S").subskills.size(), 6u);
}

TEST(GrowTree, RejectsUnknownSkillAndEmptyNames) {
  auto f = SkillForest().with_tree("S", 0);
  EXPECT_EQ(code_of([&] { grow_tree(f, "T", {"a"}); }), ErrorCode::kUnknownSkill);
  EXPECT_EQ(code_of([&] { grow_tree(f, "S", {}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { grow_tree(f, "S", {""}); }), ErrorCode::kInvalidArgument);
}

TEST(RebalanceTree, ZeroDeltaIsIdentity) {
  auto f = forest_with({{"S", {{"a", 50}, {"b", 100}}}});
  EXPECT_EQ(rebalance_tree(f, "S", {{"a", 0}, {"b", 0}}), f);
}

TEST(RebalanceTree, ErrorPaths) {
  auto f = forest_with({{"S", {{"a", 50}}}});
  EXPECT_EQ(code_of([&] { rebalance_tree(f, "S", {{"a", -60}}); }), ErrorCode::kNegativeAllocation);
  EXPECT_EQ(code_of([&] { rebalance_tree(f, "S", {{"a", 101}}); }), ErrorCode::kActionCapExceeded);
  EXPECT_EQ(code_of([&] { rebalance_tree(f, "S", {{"zzz", 1}}); }), ErrorCode::kUnknownSubskill);

  ForestCaps caps;
  caps.per_subskill_cap = 60;
  auto tight = forest_with({{"S", {{"a", 50}}}}, caps);
  EXPECT_EQ(code_of([&] { rebalance_tree(tight, "S", {{"a", 11}}); }),
            ErrorCode::kAllocationCapExceeded);
}

TEST(RebalanceTree, AppliesDeltasAndConservesTotal) {
  ForestCaps caps;
  caps.per_subskill_cap = 100;
  caps.per_action_cap = 50;
  auto f = forest_with({{"S", {{"a", 0}, {"b", 0}}}}, caps);
  auto next = rebalance_tree(f, "S", {{"a", 50}, {"b", 50}});
  EXPECT_EQ(next.tree("S").find("a")->data_allocation, 50);
  EXPECT_EQ(next.tree("S").find("b")->data_allocation, 50);
  // brute-force re-sum
  std::int64_t sum = 0;
  for (const auto& t : next.trees())
    for (const auto& n : t.subskills) sum += n.data_allocation;
  EXPECT_EQ(sum - total_allocation(f), 100);
}

TEST(ResetAllocations, ZeroesOneTreeOnly) {
  auto f = forest_with({{"A", {{"a", 50}, {"b", 30}}},
                        {"B", {{"c", 20}}},
                        {"C", {{"d", 10}, {"e", 0}}}});
  auto reset = reset_allocations(f, "A");
  EXPECT_EQ(reset.tree("A").find("a")->data_allocation, 0);
  EXPECT_EQ(reset.tree("A").find("b")->data_allocation, 0);
  EXPECT_EQ(reset.tree("A").subskills.size(), 2u);
  EXPECT_EQ(reset_allocations(reset, "A"), reset);

  EXPECT_EQ(reset.tree("B"), f.tree("B"));
  EXPECT_EQ(reset.tree("C"), f.tree("C"));
  const nlohmann::json before = f;
  const nlohmann::json after = reset;
  for (int t : {1, 2}) {
    EXPECT_EQ(sha256_hex(after["trees"][t].dump()), sha256_hex(before["trees"][t].dump()));
  }
  EXPECT_EQ(code_of([&] { reset_allocations(f, "Nope"); }), ErrorCode::kUnknownSkill);
}

TEST(MaterializeQuota, Examples) {
  auto one = forest_with({{"S", {{"sub", 40}}}});
  EXPECT_EQ(materialize_quota(one), (std::vector<QuotaEntry>{{"S", "sub", 40}}));
  EXPECT_TRUE(materialize_quota(one, {{{"S", "sub"}, 40}}).empty());
  EXPECT_EQ(materialize_quota(one, {{{"S", "sub"}, 55}}).size(), 0u);

  auto two = forest_with({{"A", {{"a1", 10}, {"a2", 20}}}, {"B", {{"b1", 5}}}});
  const auto quota = materialize_quota(two);
  ASSERT_EQ(quota.size(), 3u);
  std::int64_t sum = 0;
  for (const auto& q : quota) sum += q.count;
  EXPECT_EQ(sum, 35);
  EXPECT_EQ(sum, total_allocation(two));
  EXPECT_EQ(quota[0], (QuotaEntry{"A", "a1", 10}));
  EXPECT_EQ(quota[2], (QuotaEntry{"B", "b1", 5}));
}

TEST(TotalAllocation, MatchesIndependentFold) {
  EXPECT_EQ(total_allocation(SkillForest()), 0);
  EXPECT_EQ(total_allocation(forest_with({{"S", {{"a", 50}, {"b", 100}}}})), 150);

  Rng rng(50);
  ForestCaps caps;
  caps.max_subskills_per_tree = 10;
  std::map<std::string, std::vector<std::pair<std::string, std::int64_t>>> spec;
  std::int64_t expected = 0;
  for (int n = 0; n < 50; ++n) {
    const auto alloc = static_cast<std::int64_t>(rng.below(301));
    spec["T" + std::to_string(n / 10)].emplace_back("n" + std::to_string(n), alloc);
    expected += alloc;
  }
  EXPECT_EQ(total_allocation(forest_with(spec, caps)), expected);
}

TEST(ForestSerialization, RoundTripKeepsOrderAndDigest) {
  auto f = forest_with({{"Zeta", {{"z2", 10}, {"z1", 20}}}, {"Alpha", {{"a", 5}}}});
  f = set_training_performance(f, "Zeta", "z1", 0.625);
  const auto back = nlohmann::json::parse(nlohmann::json(f).dump()).get<SkillForest>();
  EXPECT_EQ(back, f);
  EXPECT_EQ(digest(back), digest(f));
  EXPECT_EQ(back.tree("Zeta").subskills[0].name, "z2");
}

TEST(ForestTable, ShowsEveryRow) {
  auto f = forest_with({{"Algebra", {{"Solving Linear Equations", 100}}}, {"Geometry", {}}});
  const auto table = render_table(f);
  EXPECT_NE(table.find("Solving Linear Equations"), std::string::npos);
  EXPECT_NE(table.find("Geometry"), std::string::npos);
  EXPECT_NE(table.find("total allocation: 100"), std::string::npos);
}

TEST(ForestProperties, RandomSequencesKeepEveryInvariant) {
  const auto report = testing::check_forest_properties(42, 200);
  EXPECT_EQ(report.violations, 0) << (report.examples.empty() ? "" : report.examples.front());
  EXPECT_GT(report.rejected, 0);
}

}  // namespace
}  // namespace teachloop::forest
