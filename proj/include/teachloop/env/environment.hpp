#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "teachloop/core/state.hpp"
#include "teachloop/core/types.hpp"
#include "teachloop/discovery/skill_discovery.hpp"
#include "teachloop/engine/data_engine.hpp"
#include "teachloop/forest/skill_forest.hpp"
#include "teachloop/llm/provider.hpp"
#include "teachloop/student/student.hpp"

namespace teachloop::env {

enum class Variant { kOpenEnded, kSkillList, kSkillTree };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

struct EnvironmentConfig {
  Variant variant = Variant::kSkillTree;
  DomainId domain = DomainId::kSimulated;
  std::int64_t data_budget = 500;
  std::optional<forest::ForestCaps> caps;  // skill-tree only
  /// Target skills fixed by the user; discovery stage 2 is skipped when set.
  std::optional<std::vector<std::string>> user_skills;
  int max_categories = 15;
  int epochs = 1;
  /// Share of each iteration's rendered data the student actually trains on.
  double data_fraction = 1.0;

  /// Throws Error(kConfig) on inconsistent fields.
  void validate() const;
};

struct DataManifest {
  std::int64_t requested = 0;
  std::int64_t rendered = 0;
  std::int64_t trained = 0;
  std::map<std::string, std::int64_t> per_skill;
  std::map<std::string, std::map<std::string, std::int64_t>> per_subskill;
  std::vector<engine::DroppedSpec> dropped;
};

struct StepInfo {
  PerformanceReport report;
  double delta = 0.0;  // reward minus the previous reward
  DataManifest manifest;
  bool trained = false;
  /// Previous checkpoint scored on this step's data, before training on it.
  std::optional<double> forward_accuracy;
  std::string checkpoint_id;
  std::vector<std::string> notes;
};

struct StepResult {
  State state;
  double reward = 0.0;
  StepInfo info;
  std::vector<TrainingDatum> datums;
};

class Environment {
 public:
  Environment(EnvironmentConfig config, Dataset validation, const llm::LlmClient& client,
              student::Student& student, engine::DataEngine& engine);

  /// Evaluates the initial student and builds the first state, running skill
  /// discovery for the skill-list and skill-tree variants.
  const State& reset();

  StepResult step(const Action& action);

  const EnvironmentConfig& config() const { return config_; }
  const Dataset& validation() const { return validation_; }
  const State& state() const { return state_; }
  const student::StudentCheckpoint& checkpoint() const { return checkpoint_; }
  const PerformanceReport& report() const { return report_; }
  const std::vector<EvaluatedPrediction>& predictions() const { return predictions_; }
  const std::vector<std::string>& skills() const { return skills_; }
  const forest::ProducedCounts& produced() const { return produced_; }
  int iteration() const { return iteration_; }

 private:
  void check_ready() const;
  void evaluate_current();
  void rebuild_state();
  StepResult finish_step(std::vector<TrainingDatum> datums, DataManifest manifest,
                         std::vector<std::string> notes);
  StepResult step_generate(const GenerateData& action);
  StepResult step_explore(const Explore& action);
  StepResult step_exploit(const Exploit& action);

  EnvironmentConfig config_;
  Dataset validation_;
  const llm::LlmClient& client_;
  student::Student& student_;
  engine::DataEngine& engine_;

  bool ready_ = false;
  int iteration_ = 0;
  student::StudentCheckpoint checkpoint_;
  std::vector<EvaluatedPrediction> predictions_;
  PerformanceReport report_;
  std::map<std::string, std::string> item_skill_;
  std::vector<std::string> skills_;
  forest::SkillForest forest_;
  forest::ProducedCounts produced_;
  State state_;
};

/// Evenly spaced subset holding round(fraction * n) of `datums`, order kept.
std::vector<TrainingDatum> keep_fraction(const std::vector<TrainingDatum>& datums, double fraction);

/// The No-State view of `state`: student feedback is replaced by `samples`
/// random items from `pool` (marked incorrect, drawn from seed and iteration),
/// and every accuracy is zeroed. Skill names and forest structure survive.
State mask_state(const State& state, const Dataset& pool, std::uint64_t seed, int iteration,
                 std::size_t samples = 50);

}  // namespace teachloop::env
