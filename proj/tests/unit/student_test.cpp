#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "teachloop/core/error.hpp"
#include "teachloop/core/rng.hpp"
#include "teachloop/student/simulated.hpp"

namespace teachloop::student {
namespace {

Dataset flat_dataset(int items, int difficulty) {
  Dataset d;
  for (int i = 0; i < items; ++i) {
    TaskItem item;
    item.item_id = "f" + std::to_string(i);
    item.instruction = "q";
    item.difficulty = difficulty;
    item.true_skill = "S";
    item.true_subskill = "S::sub1";
    item.latent_pass_threshold = (i + 0.5) / items;
    item.gold_answer = std::to_string(*item.latent_pass_threshold);
    d.items.push_back(item);
  }
  return d;
}

std::vector<TrainingDatum> datums_for(const std::string& skill, const std::string& subskill, int n,
                                      const std::string& salt = "") {
  std::vector<TrainingDatum> out;
  for (int i = 0; i < n; ++i) {
    TrainingDatum d;
    d.instruction = "practice " + salt + std::to_string(i);
    d.response = "answer";
    d.provenance.skill = skill;
    d.provenance.subskill = subskill;
    d.provenance.spec_digest = "x";
    out.push_back(d);
  }
  return out;
}

SimulatedDomainSpec four_by_three(int items = 200, std::uint64_t seed = 1) {
  return {default_simulated_skills(4, 3), items, seed};
}

TEST(SimulatedStudent, NoDatumsLeavesCheckpointUnchanged) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent s({}, data);
  const auto c0 = s.initial();
  EXPECT_EQ(s.train(c0, {}, {.iteration = 1}), c0);
}

TEST(SimulatedStudent, ClosedFormAtUnitModulators) {
  // Difficulty at the peak and a single skill make e = f = 1, so rate = eta.
  SimulatedStudentParams params;
  params.mu = 3.0;
  SimulatedStudent s(params, flat_dataset(10, 3));
  const auto c = s.train(s.initial(), datums_for("S", "S::sub1", 100), {.iteration = 1});
  EXPECT_NEAR(c.proficiency.at("S::sub1"), 0.6424843911799903, 1e-12);
}

TEST(SimulatedStudent, SaturatesAtCap) {
  SimulatedStudentParams params;
  params.mu = 3.0;
  SimulatedStudent s(params, flat_dataset(10, 3));
  const auto c = s.train(s.initial(), datums_for("S", "S::sub1", 20000), {.iteration = 1});
  EXPECT_NEAR(c.proficiency.at("S::sub1"), 0.9, 1e-12);
}

TEST(SimulatedStudent, EpochsScaleExposureUpToSaturation) {
  SimulatedStudentParams params;
  params.mu = 3.0;
  SimulatedStudent s(params, flat_dataset(10, 3));
  const auto data = datums_for("S", "S::sub1", 10);
  EXPECT_DOUBLE_EQ(s.train(s.initial(), data, {.iteration = 1, .epochs = 1}).exposure.at("S::sub1"), 10);
  EXPECT_DOUBLE_EQ(s.train(s.initial(), data, {.iteration = 1, .epochs = 2}).exposure.at("S::sub1"), 20);
  EXPECT_DOUBLE_EQ(s.train(s.initial(), data, {.iteration = 1, .epochs = 5}).exposure.at("S::sub1"), 20);
}

TEST(SimulatedStudent, ModulatorsFollowDifficultyAndRarity) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudentParams params;
  SimulatedStudent s(params, data);
  for (const auto& [name, profile] : s.profiles()) {
    const double z = (profile.mean_difficulty - params.mu) / params.sigma;
    const double expected = params.eta * std::exp(-z * z / 2) * std::pow(1 - profile.rarity, params.rho);
    EXPECT_NEAR(profile.rate, expected, 1e-15) << name;
    EXPECT_NEAR(profile.rarity, 0.75, 1e-12);
  }
}

TEST(SimulatedStudent, TrainingIsMonotoneAndDeterministic) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent a({}, data);
  SimulatedStudent b({}, data);
  Rng rng(3);
  auto ca = a.initial();
  auto cb = b.initial();
  const auto names = [&] {
    std::vector<std::string> v;
    for (const auto& [n, p] : a.profiles()) v.push_back(n);
    return v;
  }();
  for (int step = 1; step <= 30; ++step) {
    const auto& target = names[rng.below(names.size())];
    const auto batch = datums_for(a.profiles().at(target).skill, target,
                                  static_cast<int>(rng.below(50)), std::to_string(step) + "-");
    const auto next = a.train(ca, batch, {.iteration = step});
    for (const auto& [n, p] : ca.proficiency) EXPECT_GE(next.proficiency.at(n), p);
    ca = next;
    cb = b.train(cb, batch, {.iteration = step});
    EXPECT_EQ(ca, cb);
  }
}

TEST(SimulatedStudent, EvaluateExtremes) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent s({}, data);
  auto c = s.initial();
  for (auto& [n, p] : c.proficiency) p = 1.0;
  EXPECT_DOUBLE_EQ(s.evaluate(c, data, 0).report.overall_accuracy(), 1.0);
  for (auto& [n, p] : c.proficiency) p = 0.0;
  EXPECT_DOUBLE_EQ(s.evaluate(c, data, 0).report.overall_accuracy(), 0.0);
}

TEST(SimulatedStudent, EvaluateMatchesBruteForceRecount) {
  const auto data = generate_simulated_dataset(four_by_three(200, 42), "validation");
  SimulatedStudent s({}, data);
  auto c = s.initial();
  Rng rng(99);
  for (auto& [n, p] : c.proficiency) p = rng.uniform();
  const auto eval = s.evaluate(c, data, 4);

  std::int64_t correct = 0;
  std::map<std::string, std::pair<int, int>> per_subskill;
  for (const auto& item : data.items) {
    const bool ok = c.proficiency.at(*item.true_subskill) > *item.latent_pass_threshold;
    correct += ok;
    per_subskill[*item.true_subskill].first += ok;
    per_subskill[*item.true_subskill].second += 1;
  }
  EXPECT_EQ(eval.report.overall.correct, correct);
  EXPECT_EQ(eval.report.overall.total, 200);
  for (const auto& [name, counts] : per_subskill) {
    EXPECT_EQ(eval.report.per_true_subskill.at(name).correct, counts.first);
    EXPECT_EQ(eval.report.per_true_subskill.at(name).total, counts.second);
  }
  for (const auto& p : eval.predictions) EXPECT_EQ(p.iteration, 4);
}

TEST(SimulatedStudent, UnknownSubskillIsDatasetMismatch) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent s({}, data);
  Dataset other = data;
  other.items[0].true_subskill = "Astronomy::sub1";
  try {
    s.evaluate(s.initial(), other, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDatasetMismatch);
  }
}

TEST(SimulatedStudent, CreditingRules) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent s({}, data);
  auto d = datums_for("Algebra", "Algebra::sub2", 1)[0];
  EXPECT_EQ(s.credited_subskill(d), "Algebra::sub2");

  std::set<std::string> seen;
  for (const auto& datum : datums_for("Algebra", "Algebra::sub9", 60)) {
    const auto credited = s.credited_subskill(datum);
    ASSERT_TRUE(credited);
    EXPECT_EQ(credited->rfind("Algebra::sub", 0), 0u);
    seen.insert(*credited);
  }
  EXPECT_EQ(seen.size(), 3u);

  d.provenance.skill = "fractions";
  d.provenance.subskill.reset();
  EXPECT_EQ(s.credited_subskill(d), std::nullopt);
  d.provenance.skill.reset();
  EXPECT_EQ(s.credited_subskill(d), std::nullopt);
}

TEST(SimulatedStudent, ForwardAccuracyTracksProficiency) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent s({}, data);
  const auto generated = datums_for("Geometry", "Geometry::sub2", 3000, "g");
  const auto untrained = s.evaluate_on_generated(s.initial(), generated);
  ASSERT_TRUE(untrained);
  EXPECT_NEAR(*untrained, 0.2, 0.03);

  auto saturated = s.initial();
  for (auto& [n, p] : saturated.proficiency) p = 0.9;
  EXPECT_NEAR(*s.evaluate_on_generated(saturated, generated), 0.9, 0.03);

  EXPECT_EQ(s.evaluate_on_generated(s.initial(), datums_for("Cooking", "x", 5)), std::nullopt);
}

TEST(SimulatedStudent, ForwardAccuracyReplaysFromStoredProficiency) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudent s({}, data);
  const auto mid = s.train(s.initial(), datums_for("Geometry", "Geometry::sub2", 80), {.iteration = 1});
  const auto generated = datums_for("Geometry", "Geometry::sub2", 200, "next-");
  const auto first = s.evaluate_on_generated(mid, generated);
  const auto json_copy = nlohmann::json(mid).get<StudentCheckpoint>();
  SimulatedStudent fresh({}, data);
  EXPECT_EQ(fresh.evaluate_on_generated(json_copy, generated), first);
}

TEST(SimulatedStudent, RejectsBadParameters) {
  const auto data = generate_simulated_dataset(four_by_three(), "validation");
  SimulatedStudentParams params;
  params.cap = 0.1;
  EXPECT_THROW(SimulatedStudent(params, data), Error);
  params = {};
  params.eta = 0;
  EXPECT_THROW(SimulatedStudent(params, data), Error);
}

TEST(SimulatedDataset, ShapeAndDeterminism) {
  const auto spec = four_by_three(203, 8);
  const auto a = generate_simulated_dataset(spec, "validation");
  const auto b = generate_simulated_dataset(spec, "validation");
  const auto test = generate_simulated_dataset(spec, "test");
  EXPECT_EQ(a.items, b.items);
  EXPECT_NE(a.items, test.items);
  ASSERT_EQ(a.items.size(), 203u);

  std::map<std::string, std::vector<double>> thresholds;
  std::map<std::string, int> per_skill;
  std::set<std::string> ids;
  for (const auto& item : a.items) {
    EXPECT_TRUE(ids.insert(item.item_id).second);
    EXPECT_GE(*item.difficulty, 1);
    EXPECT_LE(*item.difficulty, 5);
    EXPECT_EQ(std::stod(item.gold_answer), *item.latent_pass_threshold);
    thresholds[*item.true_subskill].push_back(*item.latent_pass_threshold);
    ++per_skill[*item.true_skill];
  }
  EXPECT_EQ(thresholds.size(), 12u);
  for (const auto& [skill, n] : per_skill) EXPECT_TRUE(n == 50 || n == 51) << skill;
  for (auto& [name, values] : thresholds) {
    std::sort(values.begin(), values.end());
    const double m = static_cast<double>(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
      EXPECT_GE(values[k], k / m);
      EXPECT_LT(values[k], (k + 1) / m);
    }
  }
}

TEST(SimulatedDataset, SubskillDifficultyCentersSpreadAcrossRange) {
  SimulatedDomainSpec spec{{{"Algebra", 1.0, 5}}, 2000, 3};
  const auto data = generate_simulated_dataset(spec, "validation");
  SimulatedStudent s({}, data);
  const std::vector<double> centers = {1.4, 2.2, 3.0, 3.8, 4.6};
  for (int j = 0; j < 5; ++j) {
    EXPECT_NEAR(s.profiles().at(hidden_subskill_name("Algebra", j + 1)).mean_difficulty, centers[j], 0.1);
  }
}

TEST(BuildReport, TalliesEveryView) {
  Dataset d = flat_dataset(4, 2);
  d.items[3].difficulty = 5;
  std::vector<EvaluatedPrediction> preds = {{"f0", "a", true, "A", 1},
                                            {"f1", "a", false, "A", 1},
                                            {"f2", "a", true, std::nullopt, 1},
                                            {"f3", "a", true, "B", 1}};
  const auto r = build_report(d, preds, 1);
  EXPECT_EQ(r.overall, (Score{3, 4}));
  EXPECT_EQ(r.per_skill.at("A"), (Score{1, 2}));
  EXPECT_EQ(r.per_skill.at("B"), (Score{1, 1}));
  EXPECT_EQ(r.per_difficulty_bin.at("2"), (Score{2, 3}));
  EXPECT_EQ(r.per_difficulty_bin.at("5"), (Score{1, 1}));
  EXPECT_EQ(r.per_true_skill.at("S"), (Score{3, 4}));
  preds.push_back({"nope", "a", true, std::nullopt, 1});
  EXPECT_THROW(build_report(d, preds, 1), Error);
}

}  // namespace
}  // namespace teachloop::student
