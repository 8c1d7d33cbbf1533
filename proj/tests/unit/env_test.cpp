#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "teachloop/core/error.hpp"
#include "teachloop/discovery/skill_discovery.hpp"
#include "teachloop/env/environment.hpp"
#include "teachloop/llm/backends.hpp"
#include "teachloop/student/simulated.hpp"

namespace teachloop::env {
namespace {

Dataset simulated(std::uint64_t seed = 3, int items = 200, const std::string& split = "validation") {
  return student::generate_simulated_dataset({student::default_simulated_skills(4, 3), items, seed}, split);
}

struct Rig {
  explicit Rig(EnvironmentConfig config, Dataset data = simulated())
      : client(std::make_shared<llm::MockBackend>(llm::MockOptions{0, 0.0, 0}),
               llm::TemplateLibrary::bundled()),
        student({}, data),
        env(std::move(config), data, client, student, engine) {}

  llm::LlmClient client;
  student::SimulatedStudent student;
  engine::SimulatedEngine engine;
  Environment env;
};

EnvironmentConfig tree_config() {
  EnvironmentConfig c;
  c.variant = Variant::kSkillTree;
  c.caps = forest::ForestCaps{100, 300, 4};
  return c;
}

EnvironmentConfig direct_config(Variant v) {
  EnvironmentConfig c;
  c.variant = v;
  c.caps.reset();
  return c;
}

TEST(EnvironmentConfig, CapsPresentExactlyForSkillTree) {
  EXPECT_NO_THROW(tree_config().validate());
  auto bad = tree_config();
  bad.variant = Variant::kSkillList;
  EXPECT_THROW(bad.validate(), Error);
  auto missing = tree_config();
  missing.caps.reset();
  EXPECT_THROW(missing.validate(), Error);
}

TEST(EnvironmentConfig, VariantNamesRoundTrip) {
  for (auto v : {Variant::kOpenEnded, Variant::kSkillList, Variant::kSkillTree}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("skill-bush"), Error);
}

TEST(Reset, SkillTreeWithUserSkillsStartsWithEmptyTrees) {
  auto config = tree_config();
  config.user_skills = std::vector<std::string>{"Algebra", "Geometry", "Number Theory", "Probability"};
  Rig rig(config);
  const auto& state = std::get<SkillTreeState>(rig.env.reset());
  EXPECT_EQ(state.forest.trees().size(), 4u);
  EXPECT_EQ(forest::total_allocation(state.forest), 0);
  for (const auto& tree : state.forest.trees()) EXPECT_TRUE(tree.subskills.empty());
}

TEST(Reset, OpenEndedStateHoldsEveryPrediction) {
  Rig rig(direct_config(Variant::kOpenEnded));
  const auto& state = std::get<OpenEndedState>(rig.env.reset());
  ASSERT_EQ(state.predictions.size(), 200u);
  std::set<std::string> ids;
  for (const auto& p : state.predictions) ids.insert(p.item_id);
  EXPECT_EQ(ids.size(), 200u);
}

TEST(Reset, SkillListKeysAreHiddenSkillsWithoutConfusion) {
  Rig rig(direct_config(Variant::kSkillList));
  const auto& state = std::get<SkillListState>(rig.env.reset());
  std::vector<std::string> keys;
  std::size_t total = 0;
  for (const auto& [skill, bucket] : state.per_skill) {
    keys.push_back(skill);
    total += bucket.predictions.size();
  }
  EXPECT_EQ(keys, discovery::hidden_skills(rig.env.validation()));
  EXPECT_EQ(total, 200u);
}

TEST(Reset, InitialAccuracyIsBaseProficiency) {
  Rig rig(tree_config());
  rig.env.reset();
  // Thresholds are stratified per subskill, so p0 = 0.2 passes about a fifth.
  EXPECT_NEAR(rig.env.report().overall_accuracy(), 0.2, 0.02);
  EXPECT_EQ(rig.env.iteration(), 0);
}

TEST(Step, RequiresReset) {
  Rig rig(tree_config());
  EXPECT_THROW(rig.env.step(Explore{"Algebra", 1}), Error);
}

TEST(Step, IllegalActionVariantIsActionTypeError) {
  Rig tree(tree_config());
  tree.env.reset();
  try {
    tree.env.step(GenerateData{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kActionType);
  }
  Rig list(direct_config(Variant::kSkillList));
  list.env.reset();
  try {
    list.env.step(Explore{"Algebra", 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kActionType);
  }
}

TEST(Step, ExploreGrowsTreeWithoutTraining) {
  Rig rig(tree_config());
  rig.env.reset();
  const double before = rig.env.report().overall_accuracy();
  const auto checkpoint = rig.env.checkpoint();
  const auto r = rig.env.step(Explore{"Algebra", 2});
  const auto& tree = std::get<SkillTreeState>(r.state).forest.tree("Algebra");
  ASSERT_EQ(tree.subskills.size(), 2u);
  for (const auto& s : tree.subskills) EXPECT_EQ(s.data_allocation, 0);
  EXPECT_FALSE(r.info.trained);
  EXPECT_EQ(r.reward, before);
  EXPECT_EQ(r.info.delta, 0.0);
  EXPECT_EQ(rig.env.checkpoint(), checkpoint);
  EXPECT_EQ(rig.env.iteration(), 1);
}

TEST(Step, ExploitRendersAllocationAndTrains) {
  Rig rig(tree_config());
  rig.env.reset();
  rig.env.step(Explore{"Algebra", 2});
  const auto before = rig.env.report();
  const auto r = rig.env.step(Exploit{"Algebra", {{"Algebra::sub1", 50}}});
  EXPECT_TRUE(r.info.trained);
  EXPECT_EQ(r.datums.size(), 50u);
  EXPECT_EQ(r.info.manifest.per_subskill.at("Algebra").at("Algebra::sub1"), 50);
  EXPECT_EQ(r.info.manifest.trained, 50);
  EXPECT_GE(r.info.report.per_true_subskill.at("Algebra::sub1").accuracy(),
            before.per_true_subskill.at("Algebra::sub1").accuracy());
  EXPECT_EQ(r.reward, r.info.report.overall_accuracy());
  EXPECT_DOUBLE_EQ(r.info.delta, r.reward - before.overall_accuracy());
  ASSERT_TRUE(r.info.forward_accuracy);
  const auto* node = std::get<SkillTreeState>(r.state).forest.tree("Algebra").find("Algebra::sub1");
  ASSERT_TRUE(node->training_performance);
}

TEST(Step, ExploitOnlyRendersOutstandingQuota) {
  Rig rig(tree_config());
  rig.env.reset();
  rig.env.step(Explore{"Algebra", 1});
  rig.env.step(Exploit{"Algebra", {{"Algebra::sub1", 80}}});
  const auto again = rig.env.step(Exploit{"Algebra", {{"Algebra::sub1", 0}}});
  EXPECT_FALSE(again.info.trained);
  const auto more = rig.env.step(Exploit{"Algebra", {{"Algebra::sub1", 20}}});
  EXPECT_EQ(more.datums.size(), 20u);
  EXPECT_EQ((rig.env.produced().at({"Algebra", "Algebra::sub1"})), 100);
}

TEST(Step, ForestErrorPropagatesWithoutTraining) {
  Rig rig(tree_config());
  rig.env.reset();
  rig.env.step(Explore{"Algebra", 1});
  const auto state = rig.env.state();
  const auto checkpoint = rig.env.checkpoint();
  try {
    rig.env.step(Exploit{"Algebra", {{"Algebra::sub1", 101}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kActionCapExceeded);
  }
  EXPECT_EQ(rig.env.state(), state);
  EXPECT_EQ(rig.env.checkpoint(), checkpoint);
  EXPECT_EQ(rig.env.iteration(), 1);
  EXPECT_THROW(rig.env.step(Explore{"Algebra", 4}), Error);
  EXPECT_THROW(rig.env.step(Explore{"Knitting", 1}), Error);
}

TEST(Step, EmptyPlanIsIdentity) {
  Rig rig(direct_config(Variant::kOpenEnded));
  const auto initial = rig.env.reset();
  const auto checkpoint = rig.env.checkpoint();
  const auto r = rig.env.step(GenerateData{});
  EXPECT_EQ(r.state, initial);
  EXPECT_EQ(rig.env.checkpoint(), checkpoint);
  EXPECT_FALSE(r.info.trained);
}

TEST(Step, PlanOverBudgetIsRejected) {
  auto config = direct_config(Variant::kOpenEnded);
  config.data_budget = 2;
  Rig rig(config);
  rig.env.reset();
  EXPECT_THROW(rig.env.step(GenerateData{std::vector<DataSpec>(3, DataSpec{"x"})}), Error);
}

TEST(Step, SkillListStateStaysTotal) {
  Rig rig(direct_config(Variant::kSkillList));
  rig.env.reset();
  DataSpec spec{"practice", "Geometry", "Geometry::sub2"};
  const auto r = rig.env.step(GenerateData{std::vector<DataSpec>(40, spec)});
  std::size_t total = 0;
  for (const auto& [skill, bucket] : std::get<SkillListState>(r.state).per_skill) {
    total += bucket.predictions.size();
    for (const auto& p : bucket.predictions) EXPECT_EQ(p.assigned_skill, skill);
  }
  EXPECT_EQ(total, 200u);
  EXPECT_EQ(r.info.manifest.per_skill.at("Geometry"), 40);
  EXPECT_GE(r.info.delta, 0.0);
}

TEST(Step, DataFractionTrainsOnSubset) {
  auto config = tree_config();
  config.data_fraction = 0.2;
  Rig rig(config);
  rig.env.reset();
  rig.env.step(Explore{"Algebra", 1});
  const auto r = rig.env.step(Exploit{"Algebra", {{"Algebra::sub1", 100}}});
  EXPECT_EQ(r.info.manifest.rendered, 100);
  EXPECT_EQ(r.info.manifest.trained, 20);
}

TEST(KeepFraction, EvenlySpaced) {
  std::vector<TrainingDatum> datums(10);
  for (int i = 0; i < 10; ++i) datums[static_cast<std::size_t>(i)].instruction = std::to_string(i);
  const auto kept = keep_fraction(datums, 0.2);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].instruction, "4");
  EXPECT_EQ(kept[1].instruction, "9");
  EXPECT_EQ(keep_fraction(datums, 1.0).size(), 10u);
  EXPECT_EQ(keep_fraction(datums, 0.55).size(), 6u);
}

TEST(MaskState, OpenEndedGetsSeededPoolSamples) {
  const auto pool = simulated(3, 300, "train");
  OpenEndedState s;
  s.predictions.push_back({"validation-000", "0.2", true, std::nullopt, 0});
  const auto a = std::get<OpenEndedState>(mask_state(s, pool, 1, 2));
  const auto b = std::get<OpenEndedState>(mask_state(s, pool, 1, 2));
  const auto c = std::get<OpenEndedState>(mask_state(s, pool, 1, 3));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  ASSERT_EQ(a.predictions.size(), 50u);
  for (const auto& p : a.predictions) {
    EXPECT_FALSE(p.correct);
    EXPECT_NE(pool.find(p.item_id), nullptr);
  }
}

TEST(MaskState, SkillListKeepsSkillsAndZeroesAccuracy) {
  const auto pool = simulated(3, 300, "train");
  SkillListState s;
  s.per_skill["A"].accuracy = 0.9;
  s.per_skill["B"].accuracy = 0.1;
  const auto masked = std::get<SkillListState>(mask_state(s, pool, 4, 0, 10));
  ASSERT_EQ(masked.per_skill.size(), 2u);
  EXPECT_EQ(masked.per_skill.at("A").accuracy, 0.0);
  EXPECT_EQ(masked.per_skill.at("A").predictions.size(), 5u);
  EXPECT_EQ(masked.per_skill.at("B").predictions.size(), 5u);
}

}  // namespace
}  // namespace teachloop::env
