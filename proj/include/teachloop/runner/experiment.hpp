#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "teachloop/engine/data_engine.hpp"
#include "teachloop/llm/provider.hpp"
#include "teachloop/runner/analysis.hpp"
#include "teachloop/runner/config.hpp"
#include "teachloop/runner/episode.hpp"

namespace teachloop::runner {

struct Datasets {
  Dataset validation;
  Dataset test;
  Dataset train;  // No-State sample pool
};

Datasets load_datasets(const ExperimentConfig& config);

/// Every component of one episode, wired from a config.
struct Experiment {
  ExperimentConfig config;
  Datasets data;
  std::shared_ptr<llm::TranscriptLog> transcript;
  std::unique_ptr<llm::LlmClient> client;
  std::unique_ptr<student::Student> student;
  std::unique_ptr<engine::DataEngine> engine;
  std::unique_ptr<policy::Policy> policy;
  std::unique_ptr<env::Environment> environment;

  ItemLookup lookup() const;
};

/// The provider-backed client described by `config.provider`.
std::unique_ptr<llm::LlmClient> make_client(const ExperimentConfig& config,
                                            std::shared_ptr<llm::TranscriptLog> transcript = nullptr);

/// The transcript is written to `dir/transcript.jsonl` when `dir` is set.
std::unique_ptr<Experiment> build_experiment(const ExperimentConfig& config,
                                             const std::optional<std::filesystem::path>& dir = std::nullopt);

struct RunOutput {
  EpisodeResult episode;
  Analysis analysis;
};

/// Runs one episode. With `dir`, writes config.yaml, trajectory.jsonl,
/// data/, snapshots/, transcript.jsonl, summary.json and analysis/.
RunOutput run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& dir = std::nullopt);

struct ReplayReport {
  bool identical = false;
  std::string recorded_digest;
  std::string replayed_digest;
  std::optional<int> first_mismatch;  // iteration of the first differing record
  std::size_t recorded_records = 0;
  std::size_t replayed_records = 0;
};

/// Compares two trajectories record by record (wall-clock ignored).
ReplayReport compare_trajectories(const std::vector<TrajectoryRecord>& recorded,
                                  const std::vector<TrajectoryRecord>& replayed);

/// Re-runs the episode stored in `dir` from its config.yaml and compares it
/// with trajectory.jsonl. Live providers and non-deterministic students raise
/// Error(kReplayRequiresDeterministicBackends), unless `use_transcript` swaps
/// the provider for the recorded transcript.jsonl.
ReplayReport replay_directory(const std::filesystem::path& dir, bool use_transcript = false);

struct SweepRow {
  std::uint64_t seed = 0;
  double with_state = 0.0;
  double no_state = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double mean_with_state = 0.0;
  double mean_no_state = 0.0;
  std::string table;
};

/// Runs seeds base_seed .. base_seed + n - 1 with and without state, in up
/// to `jobs` worker processes. Each cell is the best validation accuracy.
SweepResult sweep(const ExperimentConfig& config, int seeds, int jobs = 1,
                  const std::optional<std::filesystem::path>& dir = std::nullopt);

}  // namespace teachloop::runner
