#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachloop/env/environment.hpp"
#include "teachloop/policy/policy.hpp"
#include "teachloop/student/student.hpp"

namespace teachloop::runner {

struct TrajectoryRecord {
  int iteration = 0;
  std::string state_digest;
  std::optional<nlohmann::json> action;  // absent for the initial evaluation
  env::DataManifest manifest;
  std::string checkpoint_id;
  PerformanceReport report;
  std::optional<double> forward_accuracy;
  bool trained = false;
  double reward = 0.0;
  double delta = 0.0;
  std::vector<std::string> notes;
  std::int64_t wall_clock_ms = 0;  // excluded from digests
};

nlohmann::json to_json(const TrajectoryRecord& r, bool with_clock = true);
TrajectoryRecord record_from_json(const nlohmann::json& j);

/// Digest over every record with wall-clock time stripped. Empty input
/// digests the empty list.
std::string trajectory_digest(const std::vector<TrajectoryRecord>& trajectory);

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

/// Index of the largest value, earliest on ties; nullopt for an empty list.
std::optional<std::size_t> select_best(const std::vector<double>& accuracies);

/// Iterations eligible for checkpoint selection: the initial evaluation plus
/// every step that trained.
std::vector<const TrajectoryRecord*> candidate_records(const std::vector<TrajectoryRecord>& trajectory);

enum class EpisodeStatus { kCompleted, kSaturated, kTerminal, kAborted };
std::string_view to_string(EpisodeStatus status);

struct EpisodeSettings {
  int max_iterations = 10;
  int saturation_patience = 3;
};

struct EpisodeResult {
  EpisodeStatus status = EpisodeStatus::kCompleted;
  std::optional<std::string> error;
  std::vector<TrajectoryRecord> trajectory;
  int best_iteration = 0;
  double best_validation_accuracy = 0.0;
  student::StudentCheckpoint best_checkpoint;
  std::optional<PerformanceReport> test_report;
  std::string digest;

  nlohmann::json summary() const;
};

/// Resolves item ids for policies (validation and sample-pool items).
using ItemLookup = std::function<const TaskItem*(std::string_view)>;

/// Reset, then act/step until max_iterations, saturation (patience counts
/// training steps only) or the policy's terminal action. The test set is
/// scored once, on the best checkpoint. Module errors end the episode with
/// status aborted and the partial trajectory. When `dir` is set, records,
/// per-iteration data and snapshots are written there as they happen.
EpisodeResult run_episode(env::Environment& environment, policy::Policy& policy, student::Student& student,
                          const Dataset* test, const EpisodeSettings& settings, ItemLookup lookup,
                          const std::optional<std::filesystem::path>& dir = std::nullopt);

}  // namespace teachloop::runner
