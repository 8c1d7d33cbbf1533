#include "teachloop/llm/schemas.hpp"

#include "teachloop/core/error.hpp"

namespace teachloop::llm {
namespace {

using nlohmann::json;
using Check = std::optional<std::string>;

Check need_object(const json& j) {
  if (!j.is_object()) return "expected a JSON object";
  return std::nullopt;
}

Check need_string(const json& j, const char* key, bool allow_null = false) {
  auto it = j.find(key);
  if (it == j.end()) return std::string("missing field '") + key + "'";
  if (allow_null && it->is_null()) return std::nullopt;
  if (!it->is_string()) return std::string("field '") + key + "' must be a string";
  if (it->get_ref<const std::string&>().empty()) {
    return std::string("field '") + key + "' must be non-empty";
  }
  return std::nullopt;
}

Check need_array(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return std::string("missing field '") + key + "'";
  if (!it->is_array()) return std::string("field '") + key + "' must be an array";
  return std::nullopt;
}

Validator strings(std::vector<const char*> keys) {
  return [keys](const json& j) -> Check {
    if (auto e = need_object(j)) return e;
    for (const char* key : keys) {
      if (auto e = need_string(j, key)) return e;
    }
    return std::nullopt;
  };
}

Check skill_label(const json& j) {
  if (auto e = need_object(j)) return e;
  return need_string(j, "skill", /*allow_null=*/true);
}

Check skill_categories(const json& j) {
  if (auto e = need_object(j)) return e;
  if (auto e = need_array(j, "categories")) return e;
  for (const auto& c : j["categories"]) {
    if (auto e = need_object(c)) return "category: " + *e;
    if (auto e = need_string(c, "name")) return "category: " + *e;
    if (auto e = need_array(c, "members")) return "category: " + *e;
    for (const auto& m : c["members"]) {
      if (!m.is_string()) return std::string("category members must be strings");
    }
  }
  return std::nullopt;
}

Check subskill_list(const json& j) {
  if (auto e = need_object(j)) return e;
  if (auto e = need_array(j, "subskills")) return e;
  for (const auto& s : j["subskills"]) {
    if (!s.is_string() || s.get_ref<const std::string&>().empty()) {
      return std::string("subskills must be non-empty strings");
    }
  }
  return std::nullopt;
}

Check data_specs(const json& j) {
  if (auto e = need_object(j)) return e;
  if (auto e = need_array(j, "specs")) return e;
  for (const auto& s : j["specs"]) {
    if (auto e = need_object(s)) return "spec: " + *e;
    if (auto e = need_string(s, "instruction")) return "spec: " + *e;
    for (const char* key : {"skill", "subskill"}) {
      if (s.contains(key) && !s[key].is_null() && !s[key].is_string()) {
        return std::string("spec field '") + key + "' must be a string";
      }
    }
    if (s.contains("hints") && !s["hints"].is_object()) {
      return std::string("spec field 'hints' must be an object");
    }
  }
  return std::nullopt;
}

Check vqa_questions(const json& j) {
  if (auto e = need_object(j)) return e;
  if (auto e = need_array(j, "questions")) return e;
  if (j["questions"].empty()) return std::string("questions must be non-empty");
  for (const auto& q : j["questions"]) {
    if (auto e = need_object(q)) return "question: " + *e;
    if (auto e = need_string(q, "question")) return "question: " + *e;
    if (auto e = need_string(q, "answer")) return "question: " + *e;
  }
  return std::nullopt;
}

}  // namespace

SchemaRegistry SchemaRegistry::builtin() {
  SchemaRegistry r;
  r.add(schema::kSkillLabel, skill_label);
  r.add(schema::kSkillCategories, skill_categories);
  r.add(schema::kSubskillList, subskill_list);
  r.add(schema::kDataSpecs, data_specs);
  r.add(schema::kMathDatum, strings({"question", "solution", "final_answer"}));
  r.add(schema::kVqaDescription, strings({"description"}));
  r.add(schema::kVqaQuestions, vqa_questions);
  r.add(schema::kCodeProblem, strings({"problem", "starter_code"}));
  r.add(schema::kCodeSolution, strings({"solution"}));
  return r;
}

void SchemaRegistry::add(const std::string& schema_id, Validator validator) {
  validators_[schema_id] = std::move(validator);
}

bool SchemaRegistry::has(const std::string& schema_id) const {
  return validators_.count(schema_id) > 0;
}

std::optional<std::string> SchemaRegistry::validate(const std::string& schema_id,
                                                    const nlohmann::json& payload) const {
  auto it = validators_.find(schema_id);
  if (it == validators_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unregistered schema '" + schema_id + "'");
  }
  return it->second(payload);
}

nlohmann::json extract_json_object(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    return nlohmann::json::parse(raw);  // throws with a position-specific message
  }
  return nlohmann::json::parse(raw.substr(open, close - open + 1));
}

}  // namespace teachloop::llm
