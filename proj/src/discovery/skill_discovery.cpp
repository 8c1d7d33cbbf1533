#include "teachloop/discovery/skill_discovery.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "teachloop/core/answers.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/llm/schemas.hpp"

namespace teachloop::discovery {
namespace {

using nlohmann::json;

std::set<std::string> tokens(const std::string& text) {
  std::set<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      out.insert(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.insert(std::move(current));
  return out;
}

// Checks that `payload.categories` partitions `labels` exactly.
std::optional<std::string> partition_problem(const json& payload,
                                             const std::vector<std::string>& labels,
                                             int max_categories) {
  const auto& categories = payload.at("categories");
  if (categories.empty()) return "no categories were returned";
  if (static_cast<int>(categories.size()) > max_categories) {
    return "returned " + std::to_string(categories.size()) + " categories; at most " +
           std::to_string(max_categories) + " are allowed";
  }
  std::set<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& c : categories) {
    if (!names.insert(normalize_answer(c.at("name").get<std::string>())).second) {
      return "category '" + c["name"].get<std::string>() + "' appears twice";
    }
    for (const auto& m : c.at("members")) ++seen[m.get<std::string>()];
  }
  for (const auto& label : labels) {
    auto it = seen.find(label);
    if (it == seen.end()) return "label '" + label + "' is not assigned to any category";
    if (it->second > 1) return "label '" + label + "' is assigned to more than one category";
  }
  if (seen.size() != labels.size()) {
    for (const auto& [member, n] : seen) {
      if (std::find(labels.begin(), labels.end(), member) == labels.end()) {
        return "'" + member + "' is not one of the given labels";
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::size_t> nearest_by_tokens(const std::string& label,
                                             const std::vector<std::string>& candidates) {
  const auto mine = tokens(label);
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto theirs = tokens(candidates[i]);
    std::size_t shared = 0;
    for (const auto& t : mine) shared += theirs.count(t);
    if (shared == 0) continue;
    const double score = static_cast<double>(shared) /
                         static_cast<double>(mine.size() + theirs.size() - shared);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

std::vector<std::string> hidden_skills(const Dataset& dataset) {
  std::set<std::string> found;
  for (const auto& item : dataset.items) {
    if (item.true_skill) found.insert(*item.true_skill);
  }
  return {found.begin(), found.end()};
}

SkillDiscovery::SkillDiscovery(const llm::LlmClient& client, DiscoveryOptions options)
    : client_(client), options_(std::move(options)) {
  if (options_.max_categories < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_categories must be at least 1");
  }
}

std::string SkillDiscovery::template_id(const std::string& module) const {
  return module + "/" + std::string(to_string(options_.domain));
}

llm::CompletionRequest SkillDiscovery::annotation_request(
    const TaskItem& item, const std::vector<std::string>& pool) const {
  llm::CompletionRequest r;
  r.template_id = template_id("skill_annotation");
  r.schema_id = "skill_label";
  r.variables = {{"instruction", item.instruction},
                 {"gold_answer", item.gold_answer},
                 {"skill_pool", json(pool).dump()}};
  if (item.true_skill) r.variables["hidden_skill"] = *item.true_skill;
  return r;
}

std::string SkillDiscovery::annotate_instance(const TaskItem& item) const {
  const auto out = client_.complete(annotation_request(item, options_.skill_pool));
  const auto& skill = out.payload.at("skill");
  return skill.is_null() ? kUncategorized : skill.get<std::string>();
}

std::map<std::string, std::string> SkillDiscovery::aggregate_skills(
    const std::vector<std::string>& labels) const {
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "no skill labels to aggregate");

  std::vector<std::string> distinct;
  std::map<std::string, int> counts;
  for (const auto& label : labels) {
    if (label == kUncategorized) continue;
    if (counts[label]++ == 0) distinct.push_back(label);
  }
  std::map<std::string, std::string> mapping;
  if (std::find(labels.begin(), labels.end(), kUncategorized) != labels.end()) {
    mapping[kUncategorized] = kUncategorized;
  }
  if (distinct.empty()) return mapping;

  json listed = json::array();
  for (const auto& label : distinct) listed.push_back({{"label", label}, {"count", counts[label]}});

  llm::CompletionRequest r;
  r.template_id = template_id("skill_aggregation");
  r.schema_id = "skill_categories";
  r.variables = {{"labels", listed.dump()},
                 {"max_categories", std::to_string(options_.max_categories)}};
  const int max_categories = options_.max_categories;
  r.semantic_check = [&distinct, max_categories](const json& payload) {
    return partition_problem(payload, distinct, max_categories);
  };
  llm::StructuredResponse out;
  try {
    out = client_.complete(r);
  } catch (const StructuredParseFailure& e) {
    if (!e.semantic()) throw;
    throw Error(ErrorCode::kPartitionViolation, e.what());
  }
  for (const auto& c : out.payload["categories"]) {
    for (const auto& m : c["members"]) mapping[m.get<std::string>()] = c["name"].get<std::string>();
  }
  return mapping;
}

DiscoveryResult SkillDiscovery::discover(const Dataset& dataset,
                                         std::vector<EvaluatedPrediction>& predictions) const {
  if (predictions.empty()) throw Error(ErrorCode::kInvalidArgument, "no predictions to discover skills from");

  const auto pool = options_.skill_pool.empty() ? hidden_skills(dataset) : options_.skill_pool;
  std::vector<llm::CompletionRequest> requests;
  requests.reserve(predictions.size());
  for (const auto& p : predictions) {
    const TaskItem* item = dataset.find(p.item_id);
    if (!item) throw Error(ErrorCode::kDatasetMismatch, "prediction for unknown item '" + p.item_id + "'");
    requests.push_back(annotation_request(*item, pool));
  }
  const auto outcomes = client_.complete_all(requests);

  DiscoveryResult result;
  std::vector<std::string> raw;
  raw.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (outcomes[i].error) std::rethrow_exception(outcomes[i].error);
    const auto& skill = outcomes[i].response->payload.at("skill");
    raw.push_back(skill.is_null() ? kUncategorized : skill.get<std::string>());
    result.assignment.item_to_raw[predictions[i].item_id] = raw.back();
  }

  auto& mapping = result.assignment.raw_to_category;
  if (options_.user_skills) {
    const auto& targets = *options_.user_skills;
    for (const auto& label : raw) {
      if (mapping.count(label)) continue;
      const auto nearest = label == kUncategorized ? std::nullopt : nearest_by_tokens(label, targets);
      mapping[label] = nearest ? targets[*nearest] : kUncategorized;
    }
    result.skills = targets;
  } else {
    mapping = aggregate_skills(raw);
  }

  std::set<std::string> listed(result.skills.begin(), result.skills.end());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& category = mapping.at(raw[i]);
    predictions[i].assigned_skill = category;
    if (listed.insert(category).second) result.skills.push_back(category);
  }
  return result;
}

SubskillProposal SkillDiscovery::propose_subskills(const std::string& skill,
                                                   const std::vector<std::string>& existing,
                                                   int k) const {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "must propose at least one subskill");

  std::set<std::string> taken;
  for (const auto& name : existing) taken.insert(normalize_answer(name));
  // Keeps names that are new and not repeated, in reply order.
  auto fresh = [&taken](const json& payload) {
    std::vector<std::string> names;
    std::set<std::string> seen = taken;
    for (const auto& n : payload.at("subskills")) {
      const auto name = n.get<std::string>();
      if (seen.insert(normalize_answer(name)).second) names.push_back(name);
    }
    return names;
  };

  llm::CompletionRequest r;
  r.template_id = template_id("subskill_proposal");
  r.schema_id = "subskill_list";
  r.variables = {{"skill", skill}, {"existing", json(existing).dump()}, {"count", std::to_string(k)}};
  r.semantic_check = [&fresh, k](const json& payload) -> std::optional<std::string> {
    const auto names = fresh(payload);
    if (static_cast<int>(names.size()) < k) {
      return "need " + std::to_string(k) + " distinct new subskills, got " +
             std::to_string(names.size());
    }
    return std::nullopt;
  };

  SubskillProposal proposal;
  proposal.requested = k;
  try {
    proposal.names = fresh(client_.complete(r).payload);
  } catch (const StructuredParseFailure& e) {
    if (!e.semantic()) throw;
    proposal.names = fresh(llm::extract_json_object(e.last_raw_text()));
  }
  if (static_cast<int>(proposal.names.size()) > k) proposal.names.resize(static_cast<std::size_t>(k));
  return proposal;
}

}  // namespace teachloop::discovery
