#include "teachloop/core/serialize.hpp"

#include <fstream>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"

namespace teachloop {
namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& value) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    value.reset();
  } else {
    value = it->template get<T>();
  }
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("missing field '") + key + "'");
  }
  return *it;
}

}  // namespace

void to_json(json& j, const TaskItem& item) {
  j = json{{"item_id", item.item_id},
           {"instruction", item.instruction},
           {"gold_answer", item.gold_answer}};
  put_optional(j, "media_ref", item.media_ref);
  put_optional(j, "difficulty", item.difficulty);
  put_optional(j, "true_skill", item.true_skill);
  put_optional(j, "true_subskill", item.true_subskill);
  put_optional(j, "latent_pass_threshold", item.latent_pass_threshold);
}

void from_json(const json& j, TaskItem& item) {
  item.item_id = require(j, "item_id").get<std::string>();
  item.instruction = j.value("instruction", std::string{});
  item.gold_answer = j.value("gold_answer", std::string{});
  get_optional(j, "media_ref", item.media_ref);
  get_optional(j, "difficulty", item.difficulty);
  get_optional(j, "true_skill", item.true_skill);
  get_optional(j, "true_subskill", item.true_subskill);
  get_optional(j, "latent_pass_threshold", item.latent_pass_threshold);
}

void to_json(json& j, const EvaluatedPrediction& p) {
  j = json{{"item_id", p.item_id},
           {"predicted_answer", p.predicted_answer},
           {"correct", p.correct},
           {"iteration", p.iteration}};
  put_optional(j, "assigned_skill", p.assigned_skill);
}

void from_json(const json& j, EvaluatedPrediction& p) {
  p.item_id = require(j, "item_id").get<std::string>();
  p.predicted_answer = j.value("predicted_answer", std::string{});
  p.correct = j.value("correct", false);
  p.iteration = j.value("iteration", 0);
  get_optional(j, "assigned_skill", p.assigned_skill);
}

void to_json(json& j, const DataSpec& spec) {
  j = json{{"instruction", spec.instruction},
           {"domain", std::string(to_string(spec.domain))},
           {"rendering_hints", spec.rendering_hints}};
  put_optional(j, "target_skill", spec.target_skill);
  put_optional(j, "target_subskill", spec.target_subskill);
}

void from_json(const json& j, DataSpec& spec) {
  spec.instruction = j.value("instruction", std::string{});
  spec.domain = parse_domain(j.value("domain", std::string("simulated")));
  spec.rendering_hints =
      j.value("rendering_hints", std::map<std::string, std::string>{});
  get_optional(j, "target_skill", spec.target_skill);
  get_optional(j, "target_subskill", spec.target_subskill);
}

void to_json(json& j, const Provenance& p) {
  j = json{{"iteration", p.iteration}, {"spec_digest", p.spec_digest}};
  put_optional(j, "skill", p.skill);
  put_optional(j, "subskill", p.subskill);
}

void from_json(const json& j, Provenance& p) {
  p.iteration = j.value("iteration", 0);
  p.spec_digest = j.value("spec_digest", std::string{});
  get_optional(j, "skill", p.skill);
  get_optional(j, "subskill", p.subskill);
}

void to_json(json& j, const TrainingDatum& d) {
  j = json{{"instruction", d.instruction},
           {"response", d.response},
           {"provenance", d.provenance}};
  put_optional(j, "media_ref", d.media_ref);
}

void from_json(const json& j, TrainingDatum& d) {
  d.instruction = j.value("instruction", std::string{});
  d.response = j.value("response", std::string{});
  get_optional(j, "media_ref", d.media_ref);
  d.provenance = j.value("provenance", Provenance{});
}

void to_json(json& j, const Score& s) {
  j = json{{"correct", s.correct}, {"total", s.total}, {"accuracy", s.accuracy()}};
}

void from_json(const json& j, Score& s) {
  s.correct = j.value("correct", std::int64_t{0});
  s.total = j.value("total", std::int64_t{0});
}

void to_json(json& j, const PerformanceReport& r) {
  j = json{{"iteration", r.iteration},
           {"overall", r.overall},
           {"overall_accuracy", r.overall_accuracy()},
           {"per_skill", r.per_skill},
           {"per_difficulty_bin", r.per_difficulty_bin}};
  if (!r.per_true_skill.empty()) j["per_true_skill"] = r.per_true_skill;
  if (!r.per_true_subskill.empty()) j["per_true_subskill"] = r.per_true_subskill;
}

void from_json(const json& j, PerformanceReport& r) {
  r.iteration = j.value("iteration", 0);
  r.overall = j.value("overall", Score{});
  r.per_skill = j.value("per_skill", std::map<std::string, Score>{});
  r.per_difficulty_bin = j.value("per_difficulty_bin", std::map<std::string, Score>{});
  r.per_true_skill = j.value("per_true_skill", std::map<std::string, Score>{});
  r.per_true_subskill = j.value("per_true_subskill", std::map<std::string, Score>{});
}

json state_to_json(const State& state) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, OpenEndedState>) {
          return json{{"type", "open_ended"}, {"predictions", s.predictions}};
        } else if constexpr (std::is_same_v<T, SkillListState>) {
          json per_skill = json::object();
          for (const auto& [skill, bucket] : s.per_skill) {
            per_skill[skill] = json{{"accuracy", bucket.accuracy},
                                    {"predictions", bucket.predictions}};
          }
          return json{{"type", "skill_list"}, {"per_skill", per_skill}};
        } else {
          return json{{"type", "skill_tree"},
                      {"forest", s.forest},
                      {"per_skill_accuracy", s.per_skill_accuracy}};
        }
      },
      state);
}

State state_from_json(const json& j) {
  const auto type = require(j, "type").get<std::string>();
  if (type == "open_ended") {
    return OpenEndedState{require(j, "predictions").get<std::vector<EvaluatedPrediction>>()};
  }
  if (type == "skill_list") {
    SkillListState s;
    for (const auto& [skill, bucket] : require(j, "per_skill").items()) {
      s.per_skill[skill] = SkillBucket{
          bucket.at("predictions").get<std::vector<EvaluatedPrediction>>(),
          bucket.at("accuracy").get<double>()};
    }
    return s;
  }
  if (type == "skill_tree") {
    return SkillTreeState{require(j, "forest").get<forest::SkillForest>(),
                          j.value("per_skill_accuracy", std::map<std::string, double>{})};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown state type '" + type + "'");
}

json action_to_json(const Action& action) {
  return std::visit(
      [](const auto& a) -> json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, GenerateData>) {
          return json{{"type", "generate_data"}, {"specs", a.specs}};
        } else if constexpr (std::is_same_v<T, Explore>) {
          return json{{"type", "explore"},
                      {"skill", a.skill},
                      {"num_new_subskills", a.num_new_subskills}};
        } else {
          return json{{"type", "exploit"}, {"skill", a.skill}, {"deltas", a.deltas}};
        }
      },
      action);
}

Action action_from_json(const json& j) {
  const auto type = require(j, "type").get<std::string>();
  if (type == "generate_data") {
    return GenerateData{j.value("specs", std::vector<DataSpec>{})};
  }
  if (type == "explore") {
    return Explore{require(j, "skill").get<std::string>(),
                   require(j, "num_new_subskills").get<int>()};
  }
  if (type == "exploit") {
    return Exploit{require(j, "skill").get<std::string>(),
                   j.value("deltas", std::map<std::string, std::int64_t>{})};
  }
  throw Error(ErrorCode::kActionType, "unknown action type '" + type + "'");
}

std::string state_digest(const State& state) { return json_digest(state_to_json(state)); }

std::string spec_digest(const DataSpec& spec) { return json_digest(json(spec)); }

std::string datum_digest(const TrainingDatum& datum) { return json_digest(json(datum)); }

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIo, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& row : rows) out << row.dump() << '\n';
}

void append_jsonl(const std::filesystem::path& path, const json& row) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path.string());
  out << row.dump() << '\n';
}

Dataset read_dataset(const std::filesystem::path& path) {
  Dataset dataset;
  bool first = true;
  for (const auto& row : read_jsonl(path)) {
    TaskDomain domain = TaskDomain::defaults_for(parse_domain(row.value("domain", "simulated")));
    if (row.contains("comparison")) {
      domain.mode = parse_comparison_mode(row.at("comparison").get<std::string>());
    }
    if (first) {
      dataset.domain = domain;
      first = false;
    } else if (!(domain == dataset.domain)) {
      throw Error(ErrorCode::kDatasetMismatch,
                  path.string() + ": items reference more than one task domain");
    }
    dataset.items.push_back(row.get<TaskItem>());
  }
  return dataset;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::vector<json> rows;
  rows.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    json row = item;
    row["domain"] = std::string(to_string(dataset.domain.id));
    row["comparison"] = std::string(to_string(dataset.domain.mode));
    rows.push_back(std::move(row));
  }
  write_jsonl(path, rows);
}

std::string dataset_digest(const Dataset& dataset) {
  json j = {{"domain", std::string(to_string(dataset.domain.id))},
            {"comparison", std::string(to_string(dataset.domain.mode))},
            {"items", dataset.items}};
  return json_digest(j);
}

}  // namespace teachloop
