#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "teachloop/env/environment.hpp"
#include "teachloop/llm/backends.hpp"
#include "teachloop/policy/policy.hpp"
#include "teachloop/student/simulated.hpp"

namespace teachloop::runner {

struct SimulatedDataConfig {
  int skills = 4;
  int subskills = 3;
  int items = 200;
  int test_items = 200;
  int train_items = 500;
  std::vector<double> weights;  // empty means equal weights
  std::optional<std::uint64_t> seed;  // defaults to the episode seed
};

struct DataConfig {
  std::optional<SimulatedDataConfig> simulated;
  // JSONL datasets, used when `simulated` is unset. `train` only feeds the
  // No-State sample pool and falls back to the validation set.
  std::string validation;
  std::string test;
  std::string train;
};

struct ProviderConfig {
  std::string kind = "mock";  // mock | replay | live
  double confusion = 0.0;
  int malformed_attempts = 0;
  std::string transcript;  // replay input
  llm::LiveOptions live;
  double temperature = 0.0;
  int max_retries = 2;
  std::size_t max_in_flight = 4;
};

struct StudentConfig {
  std::string kind = "simulated";  // simulated | external
  student::SimulatedStudentParams params;
  std::string command;  // external worker over stdio
  std::string url;      // external worker over HTTP
  int timeout_seconds = 600;
};

struct PolicyConfig {
  std::string kind = "handcrafted";  // handcrafted | open-ended | skill-list | external
  policy::HandcraftedConfig handcrafted;
  std::size_t error_sample_cap = 50;
  std::string command;
};

struct AblationConfig {
  bool no_state = false;
  std::size_t no_state_samples = 50;
  bool epoch_scaling = false;
  double data_fraction = 0.2;
  int epochs = 5;
};

struct ExperimentConfig {
  std::string name = "episode";
  std::uint64_t seed = 0;
  int max_iterations = 10;
  int saturation_patience = 3;
  env::EnvironmentConfig environment;
  DataConfig data;
  ProviderConfig provider;
  StudentConfig student;
  PolicyConfig policy;
  AblationConfig ablation;

  /// The merged YAML document this config was parsed from, with overrides
  /// applied and dataset paths made absolute.
  std::string yaml;

  /// Throws Error(kConfig) on inconsistent settings.
  void validate() const;
  /// Environment settings after ablations are applied.
  env::EnvironmentConfig effective_environment() const;
};

/// Parses a YAML document. Unknown keys are errors. `overrides` are
/// "dotted.key=value" strings whose values are parsed as YAML scalars or
/// flow collections. Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {},
                              const std::filesystem::path& base_dir = {});

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace teachloop::runner
