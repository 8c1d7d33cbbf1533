#include <algorithm>
#include <cctype>
#include <regex>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/split.hpp"
#include "teachloop/llm/backends.hpp"

namespace teachloop::llm {
namespace {

using nlohmann::json;

std::string var(const TemplateVars& vars, const std::string& key, const std::string& fallback = "") {
  auto it = vars.find(key);
  return it == vars.end() ? fallback : it->second;
}

json json_var(const TemplateVars& vars, const std::string& key, json fallback) {
  auto it = vars.find(key);
  if (it == vars.end() || it->second.empty()) return fallback;
  return json::parse(it->second);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string last_word(const std::string& label) {
  const auto end = label.find_last_not_of(" \t");
  if (end == std::string::npos) return "";
  const auto start = label.find_last_of(" \t", end);
  return lower(label.substr(start == std::string::npos ? 0 : start + 1,
                            end - (start == std::string::npos ? 0 : start + 1) + 1));
}

std::string focus_of(const std::string& skill, const std::string& subskill) {
  return subskill.empty() ? skill : subskill;
}

class MockRules {
 public:
  MockRules(const MockOptions& options, const ProviderCall& call)
      : options_(options), call_(call), vars_(call.variables) {}

  std::string respond() const {
    const std::string module = template_module(call_.template_id);
    if (module == "skill_annotation") return annotate();
    if (module == "skill_aggregation") return aggregate();
    if (module == "subskill_proposal") return propose();
    if (module == "policy_open_ended") return open_ended();
    if (module == "policy_skill_list") return skill_list();
    if (module == "datum_math") return math_datum();
    if (module == "vqa_description") return vqa_description();
    if (module == "vqa_questions") return vqa_questions();
    if (module == "code_problem") return code_problem();
    if (module == "code_solution") return code_solution();
    throw Error(ErrorCode::kNotSupported, "mock backend has no rule for '" + call_.template_id + "'");
  }

 private:
  // Stable per-request uniform draw; `salt` separates independent draws.
  double draw(const std::string& salt) const {
    return unit_from(std::to_string(options_.seed) + "|" + salt + "|" + call_.template_id + "|" +
                     json(vars_).dump());
  }

  std::string annotate() const {
    auto hidden = vars_.find("hidden_skill");
    if (hidden == vars_.end()) return json{{"skill", nullptr}}.dump();
    std::string label = hidden->second;
    const json pool = json_var(vars_, "skill_pool", json::array());
    std::vector<std::string> others;
    for (const auto& s : pool) {
      if (s.get<std::string>() != label) others.push_back(s.get<std::string>());
    }
    if (!others.empty() && draw("confusion") < options_.confusion_rate) {
      const auto pick = static_cast<std::size_t>(draw("confused-label") * others.size());
      label = others[std::min(pick, others.size() - 1)];
    }
    return json{{"skill", label}}.dump();
  }

  std::string aggregate() const {
    const json labels = json_var(vars_, "labels", json::array());
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& entry : labels) {
      const std::string label = entry.is_string() ? entry.get<std::string>()
                                                  : entry.at("label").get<std::string>();
      const std::string key = last_word(label);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(label);
    }
    json categories = json::array();
    for (const auto& key : order) {
      const auto& members = groups[key];
      const std::string name = members.size() == 1 ? members.front() : key;
      categories.push_back({{"name", name}, {"members", members}});
    }
    return json{{"categories", categories}}.dump();
  }

  std::string propose() const {
    const std::string skill = var(vars_, "skill");
    const json existing = json_var(vars_, "existing", json::array());
    const int count = std::stoi(var(vars_, "count", "1"));
    const std::regex pattern(std::regex_replace(skill, std::regex(R"([.^$|()\[\]{}*+?\\])"), R"(\$&)") +
                                 R"(::sub(\d+))",
                             std::regex::icase);
    int largest = 0;
    for (const auto& name : existing) {
      std::smatch m;
      const std::string text = name.get<std::string>();
      if (std::regex_match(text, m, pattern)) largest = std::max(largest, std::stoi(m[1]));
    }
    json names = json::array();
    for (int n = 1; n <= count; ++n) names.push_back(skill + "::sub" + std::to_string(largest + n));
    return json{{"subskills", names}}.dump();
  }

  std::string open_ended() const {
    const json tags = json_var(vars_, "error_tags", json::array());
    const int budget = std::stoi(var(vars_, "budget", "0"));
    json specs = json::array();
    for (int i = 0; i < budget; ++i) {
      if (tags.empty()) {
        specs.push_back({{"instruction", "Review and consolidate core " + var(vars_, "domain") +
                                             " problems (set " + std::to_string(i + 1) + ")"}});
        continue;
      }
      const json& tag = tags[static_cast<std::size_t>(i) % tags.size()];
      json spec{{"instruction", "Write a new problem like a missed item on " +
                                    focus_of(tag.value("skill", "the task"),
                                             tag.value("subskill", ""))}};
      if (tag.contains("skill")) spec["skill"] = tag["skill"];
      if (tag.contains("subskill")) spec["subskill"] = tag["subskill"];
      specs.push_back(std::move(spec));
    }
    return json{{"specs", specs}}.dump();
  }

  std::string skill_list() const {
    const json skills = json_var(vars_, "skills", json::array());
    const int budget = std::stoi(var(vars_, "budget", "0"));
    std::vector<double> weights;
    for (const auto& s : skills) weights.push_back(1.0 - s.value("accuracy", 0.0));
    const auto counts = apportion(weights, budget);
    json specs = json::array();
    for (std::size_t k = 0; k < skills.size(); ++k) {
      const std::string skill = skills[k].at("skill").get<std::string>();
      std::vector<std::string> subskills;
      for (const auto& tag : skills[k].value("error_tags", json::array())) {
        // Only tags that agree with the bucket's label narrow the target.
        if (tag.contains("subskill") && tag.value("skill", "") == skill) {
          subskills.push_back(tag["subskill"].get<std::string>());
        }
      }
      for (std::int64_t i = 0; i < counts[k]; ++i) {
        json spec{{"instruction", "Write a practice problem for the skill " + skill}, {"skill", skill}};
        if (!subskills.empty()) spec["subskill"] = subskills[static_cast<std::size_t>(i) % subskills.size()];
        specs.push_back(std::move(spec));
      }
    }
    return json{{"specs", specs}}.dump();
  }

  std::string math_datum() const {
    const std::string focus = focus_of(var(vars_, "skill", "math"), var(vars_, "subskill"));
    const int a = 2 + static_cast<int>(draw("a") * 40);
    const int b = 1 + static_cast<int>(draw("b") * 30);
    return json{{"question", "[" + focus + "] " + var(vars_, "instruction") + " Compute " +
                                 std::to_string(a) + " + " + std::to_string(b) + "."},
                {"solution", "Step 1: identify the operation. Step 2: add " + std::to_string(a) +
                                 " and " + std::to_string(b) + "."},
                {"final_answer", std::to_string(a + b)}}
        .dump();
  }

  std::string vqa_description() const {
    return json{{"description", "A photo that exercises " +
                                    focus_of(var(vars_, "skill"), var(vars_, "subskill")) + ": " +
                                    var(vars_, "instruction")}}
        .dump();
  }

  std::string vqa_questions() const {
    const std::string focus = focus_of(var(vars_, "skill"), var(vars_, "subskill"));
    return json{{"questions",
                 {{{"question", "Does the image show an example of " + focus + "?"},
                   {"answer", draw("answer") < 0.5 ? "yes" : "no"}}}}}
        .dump();
  }

  std::string code_problem() const {
    const std::string focus = focus_of(var(vars_, "skill"), var(vars_, "subskill"));
    return json{{"problem", "Implement solve() for a task on " + focus + ". " + var(vars_, "instruction")},
                {"starter_code", "```python\ndef solve(data):\n    pass\n```"}}
        .dump();
  }

  std::string code_solution() const {
    return json{{"solution", "```python\ndef solve(data):\n    return sorted(data)\n```"}}.dump();
  }

  const MockOptions& options_;
  const ProviderCall& call_;
  const TemplateVars& vars_;
};

}  // namespace

std::string MockBackend::chat(const ProviderCall& call) {
  if (call.attempt < options_.malformed_attempts) return "Sure! Here is what you asked for:";
  return MockRules(options_, call).respond();
}

}  // namespace teachloop::llm
