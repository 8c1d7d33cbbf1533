#include "teachloop/student/simulated.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "teachloop/core/answers.hpp"
#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/rng.hpp"
#include "teachloop/core/serialize.hpp"
#include "teachloop/core/split.hpp"

namespace teachloop::student {
namespace {

const char* const kSkillNames[] = {"Algebra",     "Geometry",   "Number Theory", "Probability",
                                   "Calculus",    "Statistics", "Combinatorics", "Topology"};

std::string checkpoint_id_for(const StudentCheckpoint& c) {
  const nlohmann::json body{{"iteration", c.iteration}, {"exposure", c.exposure}};
  return "sim-" + json_digest(body).substr(0, 16);
}

}  // namespace

std::vector<SimulatedSkillSpec> default_simulated_skills(int count, int subskills_per_skill) {
  std::vector<SimulatedSkillSpec> skills;
  for (int i = 0; i < count; ++i) {
    const auto n = static_cast<std::size_t>(i);
    skills.push_back({n < std::size(kSkillNames) ? kSkillNames[n] : "Skill " + std::to_string(i + 1),
                      1.0, subskills_per_skill});
  }
  return skills;
}

std::string hidden_subskill_name(const std::string& skill, int n) {
  return skill + "::sub" + std::to_string(n);
}

Dataset generate_simulated_dataset(const SimulatedDomainSpec& spec, const std::string& split) {
  if (spec.skills.empty()) throw Error(ErrorCode::kInvalidArgument, "simulated domain needs at least one skill");
  if (spec.items < 1) throw Error(ErrorCode::kInvalidArgument, "simulated domain needs at least one item");
  Rng rng(seed_from("simulated|" + std::to_string(spec.seed) + "|" + split));

  std::vector<double> weights;
  for (const auto& s : spec.skills) {
    if (s.subskills < 1 || s.weight < 0) {
      throw Error(ErrorCode::kInvalidArgument, "bad simulated skill '" + s.name + "'");
    }
    weights.push_back(s.weight);
  }
  const auto per_skill = apportion(weights, spec.items);

  Dataset dataset;
  dataset.domain = TaskDomain::defaults_for(DomainId::kSimulated);
  for (std::size_t k = 0; k < spec.skills.size(); ++k) {
    const auto& skill = spec.skills[k];
    const auto per_sub = apportion(std::vector<double>(static_cast<std::size_t>(skill.subskills), 1.0),
                                   per_skill[k]);
    for (int j = 0; j < skill.subskills; ++j) {
      const double center = 1.0 + 4.0 * (j + 0.5) / skill.subskills;
      const double base = std::floor(center);
      const auto m = per_sub[static_cast<std::size_t>(j)];
      std::vector<std::int64_t> strata(static_cast<std::size_t>(m));
      std::iota(strata.begin(), strata.end(), 0);
      rng.shuffle(strata);
      for (std::int64_t t = 0; t < m; ++t) {
        const double threshold =
            (static_cast<double>(strata[static_cast<std::size_t>(t)]) + rng.uniform()) / static_cast<double>(m);
        const int difficulty =
            std::clamp(static_cast<int>(base) + (rng.uniform() < center - base ? 1 : 0), 1, 5);
        TaskItem item;
        item.gold_answer = format_real(threshold);
        item.difficulty = difficulty;
        item.true_skill = skill.name;
        item.true_subskill = hidden_subskill_name(skill.name, j + 1);
        item.latent_pass_threshold = threshold;
        dataset.items.push_back(std::move(item));
      }
    }
  }
  rng.shuffle(dataset.items);
  const int width = static_cast<int>(std::to_string(dataset.items.size()).size());
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    std::string index = std::to_string(i);
    index.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(index.size()))), '0');
    auto& item = dataset.items[i];
    item.item_id = split + "-" + index;
    item.instruction = "Simulated task " + item.item_id + " at difficulty " +
                       std::to_string(*item.difficulty) + ".";
  }
  return dataset;
}

void SimulatedStudentParams::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(p0) || !in_unit(cap) || cap < p0) {
    throw Error(ErrorCode::kConfig, "simulated student needs 0 <= p0 <= cap <= 1");
  }
  if (!(eta > 0) || !(sigma > 0) || rho < 0 || !(k_sat >= 1)) {
    throw Error(ErrorCode::kConfig, "simulated student needs eta > 0, sigma > 0, rho >= 0, k_sat >= 1");
  }
  for (const auto& [name, v] : p0_overrides) {
    if (!in_unit(v)) throw Error(ErrorCode::kConfig, "p0 override for '" + name + "' outside [0, 1]");
  }
  for (const auto& [name, v] : cap_overrides) {
    if (!in_unit(v)) throw Error(ErrorCode::kConfig, "cap override for '" + name + "' outside [0, 1]");
  }
}

double proficiency_after(const SubskillProfile& profile, double exposure) {
  return profile.p0 + (profile.cap - profile.p0) * -std::expm1(-profile.rate * exposure);
}

SimulatedStudent::SimulatedStudent(SimulatedStudentParams params, const Dataset& validation)
    : params_(std::move(params)) {
  params_.validate();
  if (validation.items.empty()) throw Error(ErrorCode::kInvalidArgument, "empty validation set");

  std::map<std::string, std::int64_t> skill_counts;
  std::map<std::string, std::pair<double, std::int64_t>> difficulty_sums;
  for (const auto& item : validation.items) {
    if (!item.true_skill || !item.true_subskill) {
      throw Error(ErrorCode::kDatasetMismatch,
                  "simulated student needs hidden skill tags; item '" + item.item_id + "' has none");
    }
    ++skill_counts[*item.true_skill];
    auto& [sum, n] = difficulty_sums[*item.true_subskill];
    sum += item.difficulty ? *item.difficulty : params_.mu;
    ++n;
    auto& subs = subskills_of_[*item.true_skill];
    if (std::find(subs.begin(), subs.end(), *item.true_subskill) == subs.end()) {
      subs.push_back(*item.true_subskill);
      profiles_[*item.true_subskill].skill = *item.true_skill;
    }
  }
  for (auto& [skill, subs] : subskills_of_) std::sort(subs.begin(), subs.end());

  const double total = static_cast<double>(validation.items.size());
  for (auto& [name, profile] : profiles_) {
    const auto& [sum, n] = difficulty_sums[name];
    profile.mean_difficulty = sum / static_cast<double>(n);
    profile.rarity = 1.0 - static_cast<double>(skill_counts[profile.skill]) / total;
    auto p0 = params_.p0_overrides.find(name);
    auto cap = params_.cap_overrides.find(name);
    profile.p0 = p0 == params_.p0_overrides.end() ? params_.p0 : p0->second;
    profile.cap = cap == params_.cap_overrides.end() ? params_.cap : cap->second;
    if (profile.cap < profile.p0) {
      throw Error(ErrorCode::kConfig, "subskill '" + name + "' has cap below p0");
    }
    const double z = (profile.mean_difficulty - params_.mu) / params_.sigma;
    profile.rate = params_.eta * std::exp(-0.5 * z * z) * std::pow(1.0 - profile.rarity, params_.rho);
  }
}

StudentCheckpoint SimulatedStudent::initial() {
  StudentCheckpoint c;
  for (const auto& [name, profile] : profiles_) {
    c.proficiency[name] = profile.p0;
    c.exposure[name] = 0.0;
  }
  c.checkpoint_id = checkpoint_id_for(c);
  return c;
}

std::optional<std::string> SimulatedStudent::credited_subskill(const TrainingDatum& datum) const {
  const auto& prov = datum.provenance;
  if (prov.subskill && profiles_.count(*prov.subskill)) return *prov.subskill;
  if (!prov.skill) return std::nullopt;
  auto it = subskills_of_.find(*prov.skill);
  if (it == subskills_of_.end()) return std::nullopt;
  const auto& subs = it->second;
  const auto pick = static_cast<std::size_t>(unit_from("credit|" + datum_digest(datum)) *
                                             static_cast<double>(subs.size()));
  return subs[std::min(pick, subs.size() - 1)];
}

StudentCheckpoint SimulatedStudent::train(const StudentCheckpoint& from,
                                          const std::vector<TrainingDatum>& datums,
                                          const TrainOptions& options) {
  if (datums.empty()) return from;
  if (options.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be at least 1");
  const double weight = std::min(static_cast<double>(options.epochs), params_.k_sat);

  StudentCheckpoint next = from;
  next.iteration = options.iteration;
  for (const auto& datum : datums) {
    if (auto subskill = credited_subskill(datum)) next.exposure[*subskill] += weight;
  }
  for (const auto& [name, profile] : profiles_) {
    next.proficiency[name] = proficiency_after(profile, next.exposure[name]);
  }
  next.checkpoint_id = checkpoint_id_for(next);
  return next;
}

Evaluation SimulatedStudent::evaluate(const StudentCheckpoint& checkpoint, const Dataset& dataset,
                                      int iteration) {
  if (dataset.items.empty()) throw Error(ErrorCode::kInvalidArgument, "empty evaluation set");
  Evaluation out;
  out.predictions.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    auto it = item.true_subskill ? checkpoint.proficiency.find(*item.true_subskill)
                                 : checkpoint.proficiency.end();
    if (it == checkpoint.proficiency.end()) {
      throw Error(ErrorCode::kDatasetMismatch,
                  "item '" + item.item_id + "' references a subskill the student does not model");
    }
    EvaluatedPrediction p;
    p.item_id = item.item_id;
    p.predicted_answer = format_real(it->second);
    p.correct = item.latent_pass_threshold
                    ? it->second > *item.latent_pass_threshold
                    : compare_answers(p.predicted_answer, item.gold_answer, dataset.domain.mode);
    p.iteration = iteration;
    out.predictions.push_back(std::move(p));
  }
  out.report = build_report(dataset, out.predictions, iteration);
  return out;
}

std::optional<double> SimulatedStudent::evaluate_on_generated(
    const StudentCheckpoint& checkpoint, const std::vector<TrainingDatum>& datums) {
  Score score;
  for (const auto& datum : datums) {
    const auto subskill = credited_subskill(datum);
    if (!subskill) continue;
    const double threshold = unit_from("forward|" + datum_digest(datum));
    score.add(checkpoint.proficiency.at(*subskill) > threshold);
  }
  if (score.total == 0) return std::nullopt;
  return score.accuracy();
}

}  // namespace teachloop::student
