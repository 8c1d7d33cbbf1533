#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "teachloop/student/student.hpp"

namespace teachloop::student {

struct SimulatedSkillSpec {
  std::string name;
  double weight = 1.0;  // share of items, normalized over skills
  int subskills = 3;
};

/// Shape of a generated simulated-domain dataset.
struct SimulatedDomainSpec {
  std::vector<SimulatedSkillSpec> skills;
  int items = 200;
  std::uint64_t seed = 0;
};

/// `count` skills from a fixed name list, equal weights.
std::vector<SimulatedSkillSpec> default_simulated_skills(int count, int subskills_per_skill);

/// Hidden subskill names are "{skill}::sub{n}", n from 1.
std::string hidden_subskill_name(const std::string& skill, int n);

/// Deterministic in (spec, split). Subskill j of n is centered at difficulty
/// 1 + 4(j + 0.5)/n; latent thresholds are stratified on [0, 1) per subskill.
Dataset generate_simulated_dataset(const SimulatedDomainSpec& spec, const std::string& split);

struct SimulatedStudentParams {
  double p0 = 0.2;
  double cap = 0.9;
  double eta = 0.01;
  double mu = 3.5;
  double sigma = 1.0;
  double rho = 0.5;
  double k_sat = 2.0;
  std::uint64_t seed = 0;
  /// Per-subskill overrides of p0 / cap.
  std::map<std::string, double> p0_overrides;
  std::map<std::string, double> cap_overrides;

  void validate() const;
};

/// Fixed per-subskill quantities derived from the validation set.
struct SubskillProfile {
  std::string skill;
  double p0 = 0.0;
  double cap = 0.0;
  double mean_difficulty = 0.0;  // d_s
  double rarity = 0.0;           // 1 - skill share of validation items
  double rate = 0.0;             // eta * e(d_s) * f(r_s)
};

/// Closed-form proficiency after `exposure` effective datums.
double proficiency_after(const SubskillProfile& profile, double exposure);

/// Saturating-exponential student with a difficulty sweet-spot and a rarity
/// penalty. Correct iff proficiency of the item's hidden subskill exceeds the
/// item's latent threshold.
class SimulatedStudent : public Student {
 public:
  SimulatedStudent(SimulatedStudentParams params, const Dataset& validation);

  StudentCheckpoint initial() override;
  StudentCheckpoint train(const StudentCheckpoint& from, const std::vector<TrainingDatum>& datums,
                          const TrainOptions& options) override;
  Evaluation evaluate(const StudentCheckpoint& checkpoint, const Dataset& dataset,
                      int iteration) override;
  std::optional<double> evaluate_on_generated(const StudentCheckpoint& checkpoint,
                                              const std::vector<TrainingDatum>& datums) override;
  bool deterministic() const override { return true; }
  std::string name() const override { return "simulated"; }

  /// The hidden subskill a datum trains, or nullopt when its skill is unknown.
  /// Datums naming an unknown subskill of a known skill are credited to one of
  /// that skill's subskills chosen by the datum's digest.
  std::optional<std::string> credited_subskill(const TrainingDatum& datum) const;

  const std::map<std::string, SubskillProfile>& profiles() const { return profiles_; }
  const SimulatedStudentParams& params() const { return params_; }

 private:
  SimulatedStudentParams params_;
  std::map<std::string, SubskillProfile> profiles_;
  std::map<std::string, std::vector<std::string>> subskills_of_;
};

}  // namespace teachloop::student
