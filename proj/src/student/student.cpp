#include "teachloop/student/student.hpp"

#include "teachloop/core/error.hpp"

namespace teachloop::student {

void to_json(nlohmann::json& j, const StudentCheckpoint& c) {
  j = nlohmann::json{{"checkpoint_id", c.checkpoint_id},
                     {"iteration", c.iteration},
                     {"proficiency", c.proficiency},
                     {"exposure", c.exposure}};
  if (c.external_handle) j["external_handle"] = *c.external_handle;
}

void from_json(const nlohmann::json& j, StudentCheckpoint& c) {
  c.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  c.iteration = j.at("iteration").get<int>();
  c.proficiency = j.value("proficiency", std::map<std::string, double>{});
  c.exposure = j.value("exposure", std::map<std::string, double>{});
  c.external_handle.reset();
  if (j.contains("external_handle")) c.external_handle = j["external_handle"].get<std::string>();
}

PerformanceReport build_report(const Dataset& dataset,
                               const std::vector<EvaluatedPrediction>& predictions,
                               int iteration) {
  PerformanceReport report;
  report.iteration = iteration;
  for (const auto& p : predictions) {
    const TaskItem* item = dataset.find(p.item_id);
    if (!item) {
      throw Error(ErrorCode::kDatasetMismatch, "prediction for unknown item '" + p.item_id + "'");
    }
    report.overall.add(p.correct);
    if (p.assigned_skill) report.per_skill[*p.assigned_skill].add(p.correct);
    if (item->difficulty) {
      report.per_difficulty_bin[std::to_string(difficulty_bin(*item->difficulty))].add(p.correct);
    }
    if (item->true_skill) report.per_true_skill[*item->true_skill].add(p.correct);
    if (item->true_subskill) report.per_true_subskill[*item->true_subskill].add(p.correct);
  }
  return report;
}

}  // namespace teachloop::student
