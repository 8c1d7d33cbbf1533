#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachloop/core/types.hpp"

namespace teachloop::student {

/// An immutable snapshot of the student. Simulated students carry their
/// proficiency map; external students carry the worker's opaque handle.
struct StudentCheckpoint {
  std::string checkpoint_id;
  int iteration = 0;
  std::map<std::string, double> proficiency;
  /// Cumulative effective datum count per subskill (simulated only).
  std::map<std::string, double> exposure;
  std::optional<std::string> external_handle;

  friend bool operator==(const StudentCheckpoint&, const StudentCheckpoint&) = default;
};

void to_json(nlohmann::json& j, const StudentCheckpoint& c);
void from_json(const nlohmann::json& j, StudentCheckpoint& c);

struct TrainOptions {
  int iteration = 0;
  int epochs = 1;
  nlohmann::json hyperparams = nlohmann::json::object();
};

struct Evaluation {
  std::vector<EvaluatedPrediction> predictions;
  PerformanceReport report;
};

class Student {
 public:
  virtual ~Student() = default;

  virtual StudentCheckpoint initial() = 0;
  /// Empty `datums` returns `from` unchanged.
  virtual StudentCheckpoint train(const StudentCheckpoint& from,
                                  const std::vector<TrainingDatum>& datums,
                                  const TrainOptions& options) = 0;
  virtual Evaluation evaluate(const StudentCheckpoint& checkpoint, const Dataset& dataset,
                              int iteration) = 0;
  /// Accuracy on freshly generated datums treated as QA items; nullopt when
  /// none of them can be scored.
  virtual std::optional<double> evaluate_on_generated(const StudentCheckpoint& checkpoint,
                                                      const std::vector<TrainingDatum>& datums) = 0;
  virtual bool deterministic() const = 0;
  virtual std::string name() const = 0;
};

/// Aggregates predictions over `dataset` into a report. per_skill uses each
/// prediction's assigned_skill (unassigned predictions are not counted there).
PerformanceReport build_report(const Dataset& dataset,
                               const std::vector<EvaluatedPrediction>& predictions,
                               int iteration);

}  // namespace teachloop::student
