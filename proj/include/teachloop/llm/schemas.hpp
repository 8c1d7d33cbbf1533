#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace teachloop::llm {

/// Returns an error description, or nullopt when the payload conforms.
using Validator = std::function<std::optional<std::string>(const nlohmann::json&)>;

/// Structured-output shapes keyed by schema id.
class SchemaRegistry {
 public:
  /// Registry preloaded with every shape the built-in modules request.
  static SchemaRegistry builtin();

  void add(const std::string& schema_id, Validator validator);
  bool has(const std::string& schema_id) const;
  std::optional<std::string> validate(const std::string& schema_id,
                                      const nlohmann::json& payload) const;

 private:
  std::map<std::string, Validator> validators_;
};

namespace schema {
inline constexpr const char* kSkillLabel = "skill_label";
inline constexpr const char* kSkillCategories = "skill_categories";
inline constexpr const char* kSubskillList = "subskill_list";
inline constexpr const char* kDataSpecs = "data_specs";
inline constexpr const char* kMathDatum = "math_datum";
inline constexpr const char* kVqaDescription = "vqa_description";
inline constexpr const char* kVqaQuestions = "vqa_questions";
inline constexpr const char* kCodeProblem = "code_problem";
inline constexpr const char* kCodeSolution = "code_solution";
}  // namespace schema

/// Pulls the first JSON object out of raw model text (tolerates code fences
/// and surrounding prose). Throws nlohmann::json::parse_error on failure.
nlohmann::json extract_json_object(const std::string& raw);

}  // namespace teachloop::llm
