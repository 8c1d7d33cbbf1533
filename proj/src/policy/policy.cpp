#include "teachloop/policy/policy.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <numeric>
#include <sstream>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "teachloop/core/answers.hpp"
#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/rng.hpp"
#include "teachloop/core/serialize.hpp"
#include "teachloop/core/split.hpp"
#include "teachloop/discovery/skill_discovery.hpp"
#include "teachloop/env/environment.hpp"
#include "teachloop/llm/schemas.hpp"

namespace teachloop::policy {
namespace {

using nlohmann::json;

std::string template_for(const char* module, DomainId domain) {
  return std::string(module) + "/" + std::string(to_string(domain));
}

void check_budget(const PolicyContext& context) {
  if (context.budget < 1) throw Error(ErrorCode::kInvalidArgument, "policy budget must be at least 1");
}

const TaskItem* find_item(const PolicyContext& context, const std::string& id) {
  return context.lookup ? context.lookup(id) : nullptr;
}

// Hidden tags of an item, as a provider that reads the item would name them.
json tag_of(const PolicyContext& context, const EvaluatedPrediction& p) {
  const auto* item = find_item(context, p.item_id);
  if (!item || !item->true_skill) return nullptr;
  json tag{{"skill", *item->true_skill}};
  if (item->true_subskill) tag["subskill"] = *item->true_subskill;
  return tag;
}

std::string describe_errors(const std::vector<EvaluatedPrediction>& errors, const PolicyContext& context) {
  if (errors.empty()) return "(no errors)";
  std::ostringstream out;
  for (const auto& p : errors) {
    const auto* item = find_item(context, p.item_id);
    out << "- " << (item ? item->instruction : p.item_id);
    if (item) out << " | expected: " << item->gold_answer;
    out << " | student: " << (p.predicted_answer.empty() ? "(no answer)" : p.predicted_answer) << "\n";
  }
  return out.str();
}

json tags_of(const std::vector<EvaluatedPrediction>& errors, const PolicyContext& context) {
  json tags = json::array();
  for (const auto& p : errors) {
    if (auto tag = tag_of(context, p); !tag.is_null()) tags.push_back(std::move(tag));
  }
  return tags;
}

std::vector<DataSpec> specs_from(const json& payload, DomainId domain, std::int64_t budget,
                                 std::vector<std::string>& notes) {
  std::vector<DataSpec> specs;
  for (const auto& s : payload.at("specs")) {
    DataSpec spec;
    spec.instruction = s.at("instruction").get<std::string>();
    spec.domain = domain;
    if (s.contains("skill") && s["skill"].is_string()) spec.target_skill = s["skill"].get<std::string>();
    if (s.contains("subskill") && s["subskill"].is_string()) {
      spec.target_subskill = s["subskill"].get<std::string>();
    }
    if (s.contains("hints")) {
      for (const auto& [k, v] : s["hints"].items()) {
        if (v.is_string()) spec.rendering_hints[k] = v.get<std::string>();
      }
    }
    specs.push_back(std::move(spec));
  }
  if (static_cast<std::int64_t>(specs.size()) > budget) {
    notes.push_back("provider returned " + std::to_string(specs.size()) + " specs; kept the first " +
                    std::to_string(budget));
    specs.resize(static_cast<std::size_t>(budget));
  }
  return specs;
}

std::string run_once(const std::string& command, const std::string& input) {
  std::signal(SIGPIPE, SIG_IGN);
  int in[2];
  int out[2];
  if (::pipe2(in, O_CLOEXEC) != 0 || ::pipe2(out, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kIo, "cannot create pipes for policy process");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::kIo, "cannot fork policy process");
  if (pid == 0) {
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in[0]);
  ::close(out[1]);
  for (std::size_t sent = 0; sent < input.size();) {
    const auto n = ::write(in[1], input.data() + sent, input.size() - sent);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    sent += static_cast<std::size_t>(n);
  }
  ::close(in[1]);
  std::string output;
  char chunk[4096];
  for (;;) {
    const auto n = ::read(out[0], chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    output.append(chunk, static_cast<std::size_t>(n));
  }
  ::close(out[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kProtocol, "policy process failed: " + command);
  }
  return output;
}

}  // namespace

bool Policy::is_terminal(const Action&, const State&) const { return false; }

std::vector<EvaluatedPrediction> sample_errors(const std::vector<EvaluatedPrediction>& predictions,
                                               const PolicyContext& context, std::size_t cap,
                                               std::uint64_t seed) {
  std::vector<std::size_t> errors;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!predictions[i].correct) errors.push_back(i);
  }
  std::vector<std::size_t> chosen;
  if (errors.size() <= cap) {
    chosen = errors;
  } else {
    std::map<std::string, std::vector<std::size_t>> strata;
    for (auto i : errors) {
      const auto& p = predictions[i];
      std::string key = p.assigned_skill.value_or("");
      if (key.empty()) {
        if (const auto* item = find_item(context, p.item_id); item && item->true_skill) key = *item->true_skill;
      }
      strata[key].push_back(i);
    }
    std::vector<double> sizes;
    for (const auto& [key, members] : strata) sizes.push_back(static_cast<double>(members.size()));
    const auto counts = apportion(sizes, static_cast<std::int64_t>(cap));
    Rng rng(seed_from("errors|" + std::to_string(seed) + "|" + std::to_string(context.iteration)));
    std::size_t k = 0;
    for (auto& [key, members] : strata) {
      rng.shuffle(members);
      chosen.insert(chosen.end(), members.begin(), members.begin() + counts[k++]);
    }
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<EvaluatedPrediction> out;
  for (auto i : chosen) out.push_back(predictions[i]);
  return out;
}

OpenEndedPolicy::OpenEndedPolicy(const llm::LlmClient& client, LlmPolicyOptions options)
    : client_(client), options_(options) {}

Action OpenEndedPolicy::act(const State& state, const PolicyContext& context) {
  const auto* s = std::get_if<OpenEndedState>(&state);
  if (!s) throw Error(ErrorCode::kActionType, "open-ended policy needs an open-ended state");
  check_budget(context);
  notes_.clear();

  const auto errors = sample_errors(s->predictions, context, options_.error_sample_cap, options_.seed);
  llm::CompletionRequest request;
  request.template_id = template_for("policy_open_ended", context.domain);
  request.schema_id = llm::schema::kDataSpecs;
  request.variables = {{"domain", std::string(to_string(context.domain))},
                       {"errors", describe_errors(errors, context)},
                       {"budget", std::to_string(context.budget)},
                       {"error_tags", tags_of(errors, context).dump()}};
  const auto response = client_.complete(request);
  return GenerateData{specs_from(response.payload, context.domain, context.budget, notes_)};
}

SkillListPolicy::SkillListPolicy(const llm::LlmClient& client, LlmPolicyOptions options)
    : client_(client), options_(options) {}

Action SkillListPolicy::act(const State& state, const PolicyContext& context) {
  const auto* s = std::get_if<SkillListState>(&state);
  if (!s) throw Error(ErrorCode::kActionType, "skill-list policy needs a skill-list state");
  check_budget(context);
  notes_.clear();

  json skills = json::array();
  std::ostringstream report;
  for (const auto& [skill, bucket] : s->per_skill) {
    const auto errors = sample_errors(bucket.predictions, context, options_.error_sample_cap, options_.seed);
    skills.push_back({{"skill", skill}, {"accuracy", bucket.accuracy}, {"error_tags", tags_of(errors, context)}});
    report << "## " << skill << ": accuracy " << format_real(bucket.accuracy) << " over "
           << bucket.predictions.size() << " items\n"
           << describe_errors(errors, context);
  }

  llm::CompletionRequest request;
  request.template_id = template_for("policy_skill_list", context.domain);
  request.schema_id = llm::schema::kDataSpecs;
  request.variables = {{"domain", std::string(to_string(context.domain))},
                       {"skill_report", report.str()},
                       {"budget", std::to_string(context.budget)},
                       {"skills", skills.dump()}};
  const auto response = client_.complete(request);
  auto specs = specs_from(response.payload, context.domain, context.budget, notes_);
  for (auto& spec : specs) {
    if (spec.target_skill && s->per_skill.count(*spec.target_skill)) continue;
    notes_.push_back("remapped spec skill '" + spec.target_skill.value_or("") + "' to " +
                     discovery::kUncategorized);
    spec.target_skill = discovery::kUncategorized;
  }
  return GenerateData{std::move(specs)};
}

HandcraftedSkillTreePolicy::HandcraftedSkillTreePolicy(HandcraftedConfig config) : config_(config) {
  if (config_.max_subskills < 1 || config_.per_subskill_cap < 1 || config_.per_action_cap < 1 ||
      config_.k_new < 1) {
    throw Error(ErrorCode::kConfig, "hand-crafted policy parameters must be positive");
  }
}

void HandcraftedSkillTreePolicy::reset() {
  visits_.clear();
  cursor_ = 0;
}

bool HandcraftedSkillTreePolicy::tree_full(const forest::SkillTree& tree) const {
  return tree.subskills.size() >= config_.max_subskills &&
         std::all_of(tree.subskills.begin(), tree.subskills.end(),
                     [&](const auto& s) { return s.data_allocation >= config_.per_subskill_cap; });
}

std::int64_t HandcraftedSkillTreePolicy::action_bound(std::size_t trees) const {
  const auto max = static_cast<std::int64_t>(config_.max_subskills);
  const auto fills = (config_.per_subskill_cap + config_.per_action_cap - 1) / config_.per_action_cap;
  return static_cast<std::int64_t>(trees) * (2 * max / config_.k_new + max * fills);
}

Action HandcraftedSkillTreePolicy::act(const State& state, const PolicyContext&) {
  const auto* s = std::get_if<SkillTreeState>(&state);
  if (!s) throw Error(ErrorCode::kActionType, "skill-tree policy needs a skill-tree state");
  notes_.clear();

  std::vector<const forest::SkillTree*> trees;
  for (const auto& t : s->forest.trees()) trees.push_back(&t);
  std::sort(trees.begin(), trees.end(), [](auto* a, auto* b) { return a->skill_name < b->skill_name; });
  if (trees.empty()) return Exploit{};

  const forest::SkillTree* tree = nullptr;
  for (std::size_t step = 0; step < trees.size() && !tree; ++step) {
    const auto idx = (cursor_ + step) % trees.size();
    if (!tree_full(*trees[idx])) {
      tree = trees[idx];
      cursor_ = (idx + 1) % trees.size();
    }
  }
  if (!tree) {
    Exploit noop{trees.front()->skill_name, {}};
    for (const auto& sub : trees.front()->subskills) noop.deltas[sub.name] = 0;
    return noop;
  }

  const auto& name = tree->skill_name;
  if (tree->subskills.size() < config_.max_subskills) {
    const auto visit = visits_[name]++;
    if ((visit % 2 == 0) == config_.start_with_explore) {
      const auto room = static_cast<int>(config_.max_subskills - tree->subskills.size());
      return Explore{name, std::min(config_.k_new, room)};
    }
    Exploit reset{name, {}};
    for (const auto& sub : tree->subskills) {
      reset.deltas[sub.name] = -std::min(sub.data_allocation, config_.per_action_cap);
    }
    return reset;
  }
  Exploit fill{name, {}};
  for (const auto& sub : tree->subskills) {
    fill.deltas[sub.name] =
        std::clamp<std::int64_t>(config_.per_subskill_cap - sub.data_allocation, 0, config_.per_action_cap);
  }
  return fill;
}

bool HandcraftedSkillTreePolicy::is_terminal(const Action& action, const State& state) const {
  const auto* exploit = std::get_if<Exploit>(&action);
  const auto* s = std::get_if<SkillTreeState>(&state);
  if (!exploit || !s || !exploit->is_noop()) return false;
  return std::all_of(s->forest.trees().begin(), s->forest.trees().end(),
                     [&](const auto& t) { return tree_full(t); });
}

RandomSkillTreePolicy::RandomSkillTreePolicy(HandcraftedConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {}

Action RandomSkillTreePolicy::act(const State& state, const PolicyContext& context) {
  const auto* s = std::get_if<SkillTreeState>(&state);
  if (!s) throw Error(ErrorCode::kActionType, "skill-tree policy needs a skill-tree state");
  const auto& trees = s->forest.trees();
  if (trees.empty()) return Exploit{};

  Rng rng(seed_from("no-state-tree|" + std::to_string(seed_) + "|" + std::to_string(context.iteration)));
  if (rng.bernoulli(0.5)) {
    const auto& tree = trees[rng.below(trees.size())];
    const auto room = static_cast<int>(config_.max_subskills) - static_cast<int>(tree.subskills.size());
    if (room <= 0) return Exploit{tree.skill_name, {}};
    return Explore{tree.skill_name, std::min(config_.k_new, room)};
  }
  std::vector<std::pair<const forest::SkillTree*, const forest::SubskillNode*>> subskills;
  for (const auto& t : trees) {
    for (const auto& sub : t.subskills) subskills.emplace_back(&t, &sub);
  }
  if (subskills.empty()) return Exploit{trees.front().skill_name, {}};
  const auto [tree, sub] = subskills[rng.below(subskills.size())];
  const auto delta =
      std::clamp<std::int64_t>(config_.per_subskill_cap - sub->data_allocation, 0, config_.per_action_cap);
  return Exploit{tree->skill_name, {{sub->name, delta}}};
}

NoStatePolicy::NoStatePolicy(std::unique_ptr<Policy> inner, Dataset train_pool, std::uint64_t seed,
                             std::size_t samples)
    : inner_(std::move(inner)), pool_(std::move(train_pool)), seed_(seed), samples_(samples) {
  if (pool_.items.empty()) throw Error(ErrorCode::kConfig, "no-state ablation needs a non-empty sample pool");
}

Action NoStatePolicy::act(const State& state, const PolicyContext& context) {
  const auto masked = env::mask_state(state, pool_, seed_, context.iteration, samples_);
  PolicyContext inner_context = context;
  inner_context.lookup = [this, outer = context.lookup](std::string_view id) -> const TaskItem* {
    if (const auto* item = pool_.find(id)) return item;
    return outer ? outer(id) : nullptr;
  };
  auto action = inner_->act(masked, inner_context);
  notes_ = inner_->notes();
  return action;
}

bool NoStatePolicy::is_terminal(const Action& action, const State& state) const {
  return inner_->is_terminal(action, state);
}

ExternalPolicy::ExternalPolicy(std::string command) : command_(std::move(command)) {}

Action ExternalPolicy::act(const State& state, const PolicyContext& context) {
  const json request{{"context",
                      {{"domain", std::string(to_string(context.domain))},
                       {"budget", context.budget},
                       {"iteration", context.iteration}}},
                     {"state", state_to_json(state)}};
  const auto output = run_once(command_, request.dump() + "\n");
  json reply;
  try {
    reply = json::parse(output);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("policy process wrote invalid JSON: ") + e.what());
  }
  try {
    return action_from_json(reply);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("policy process wrote a malformed action: ") + e.what());
  }
}

}  // namespace teachloop::policy
