#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace teachloop {

enum class DomainId { kMath, kVqa, kCode, kSimulated };

enum class ComparisonMode {
  kExactMatchNormalized,
  kBooleanString,
  kTestExecutionStub,
  kProficiencyThreshold,
};

std::string_view to_string(DomainId id);
std::string_view to_string(ComparisonMode mode);
DomainId parse_domain(std::string_view text);
ComparisonMode parse_comparison_mode(std::string_view text);

struct TaskDomain {
  DomainId id = DomainId::kSimulated;
  ComparisonMode mode = ComparisonMode::kProficiencyThreshold;

  /// The comparison mode each domain uses unless a dataset overrides it.
  static TaskDomain defaults_for(DomainId id);

  friend bool operator==(const TaskDomain&, const TaskDomain&) = default;
};

struct TaskItem {
  std::string item_id;
  std::string instruction;
  std::optional<std::string> media_ref;
  std::string gold_answer;
  std::optional<int> difficulty;
  // Ground-truth tags; only the simulated domain carries them.
  std::optional<std::string> true_skill;
  std::optional<std::string> true_subskill;
  std::optional<double> latent_pass_threshold;

  friend bool operator==(const TaskItem&, const TaskItem&) = default;
};

struct Dataset {
  TaskDomain domain;
  std::vector<TaskItem> items;

  const TaskItem* find(std::string_view item_id) const;
};

struct EvaluatedPrediction {
  std::string item_id;
  std::string predicted_answer;
  bool correct = false;
  std::optional<std::string> assigned_skill;
  int iteration = 0;

  friend bool operator==(const EvaluatedPrediction&,
                         const EvaluatedPrediction&) = default;
};

struct DataSpec {
  std::string instruction;
  std::optional<std::string> target_skill;
  std::optional<std::string> target_subskill;
  DomainId domain = DomainId::kSimulated;
  std::map<std::string, std::string> rendering_hints;

  friend bool operator==(const DataSpec&, const DataSpec&) = default;
};

struct Provenance {
  int iteration = 0;
  std::optional<std::string> skill;
  std::optional<std::string> subskill;
  std::string spec_digest;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TrainingDatum {
  std::string instruction;
  std::string response;
  std::optional<std::string> media_ref;
  Provenance provenance;

  friend bool operator==(const TrainingDatum&, const TrainingDatum&) = default;
};

/// Exact correct/total tally; accuracies are always derived from it.
struct Score {
  std::int64_t correct = 0;
  std::int64_t total = 0;

  double accuracy() const {
    return total == 0 ? 0.0
                      : static_cast<double>(correct) / static_cast<double>(total);
  }
  void add(bool is_correct) {
    ++total;
    if (is_correct) ++correct;
  }

  friend bool operator==(const Score&, const Score&) = default;
};

struct PerformanceReport {
  int iteration = 0;
  Score overall;
  std::map<std::string, Score> per_skill;
  std::map<std::string, Score> per_difficulty_bin;
  // Keyed by hidden tags when the evaluated items carry them.
  std::map<std::string, Score> per_true_skill;
  std::map<std::string, Score> per_true_subskill;

  double overall_accuracy() const { return overall.accuracy(); }

  friend bool operator==(const PerformanceReport&,
                         const PerformanceReport&) = default;
};

/// Difficulty bins are the five unit-width levels 1..5; out-of-range values clamp.
int difficulty_bin(double difficulty);

}  // namespace teachloop
