#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachloop/core/state.hpp"
#include "teachloop/core/types.hpp"

namespace teachloop {

using nlohmann::json;

void to_json(json& j, const TaskItem& item);
void from_json(const json& j, TaskItem& item);
void to_json(json& j, const EvaluatedPrediction& p);
void from_json(const json& j, EvaluatedPrediction& p);
void to_json(json& j, const DataSpec& spec);
void from_json(const json& j, DataSpec& spec);
void to_json(json& j, const Provenance& p);
void from_json(const json& j, Provenance& p);
void to_json(json& j, const TrainingDatum& d);
void from_json(const json& j, TrainingDatum& d);
void to_json(json& j, const Score& s);
void from_json(const json& j, Score& s);
void to_json(json& j, const PerformanceReport& r);
void from_json(const json& j, PerformanceReport& r);

json state_to_json(const State& state);
State state_from_json(const json& j);
json action_to_json(const Action& action);
Action action_from_json(const json& j);

std::string state_digest(const State& state);
std::string spec_digest(const DataSpec& spec);
std::string datum_digest(const TrainingDatum& datum);

/// Datasets are JSON Lines; each line is one TaskItem plus its "domain".
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
std::string dataset_digest(const Dataset& dataset);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);
void append_jsonl(const std::filesystem::path& path, const json& row);

template <typename T>
std::vector<T> read_jsonl_as(const std::filesystem::path& path) {
  std::vector<T> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<T>());
  return out;
}

template <typename T>
void write_jsonl_of(const std::filesystem::path& path, const std::vector<T>& values) {
  std::vector<json> rows;
  rows.reserve(values.size());
  for (const auto& v : values) rows.emplace_back(v);
  write_jsonl(path, rows);
}

}  // namespace teachloop
