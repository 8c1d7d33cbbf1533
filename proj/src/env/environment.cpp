#include "teachloop/env/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/rng.hpp"

namespace teachloop::env {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string skill_of(const TrainingDatum& d) {
  return d.provenance.skill.value_or(discovery::kUncategorized);
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kOpenEnded: return "open-ended";
    case Variant::kSkillList: return "skill-list";
    case Variant::kSkillTree: return "skill-tree";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  for (auto v : {Variant::kOpenEnded, Variant::kSkillList, Variant::kSkillTree}) {
    if (to_string(v) == text) return v;
  }
  throw Error(ErrorCode::kConfig, "unknown environment variant '" + std::string(text) + "'");
}

void EnvironmentConfig::validate() const {
  if (caps.has_value() != (variant == Variant::kSkillTree)) {
    throw Error(ErrorCode::kConfig, "forest caps must be set exactly for the skill-tree environment");
  }
  if (caps && (caps->per_action_cap < 1 || caps->per_subskill_cap < 1 || caps->max_subskills_per_tree < 1)) {
    throw Error(ErrorCode::kConfig, "forest caps must be positive");
  }
  if (data_budget < 1) throw Error(ErrorCode::kConfig, "data budget must be at least 1");
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs must be at least 1");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "data fraction must lie in (0, 1]");
  }
  if (max_categories < 1) throw Error(ErrorCode::kConfig, "max_categories must be at least 1");
  if (user_skills && user_skills->empty()) throw Error(ErrorCode::kConfig, "user skill list is empty");
}

Environment::Environment(EnvironmentConfig config, Dataset validation, const llm::LlmClient& client,
                         student::Student& student, engine::DataEngine& engine)
    : config_(std::move(config)),
      validation_(std::move(validation)),
      client_(client),
      student_(student),
      engine_(engine) {
  config_.validate();
  if (validation_.items.empty()) throw Error(ErrorCode::kInvalidArgument, "empty validation set");
}

const State& Environment::reset() {
  ready_ = false;
  iteration_ = 0;
  produced_.clear();
  item_skill_.clear();
  skills_.clear();

  checkpoint_ = student_.initial();
  predictions_ = student_.evaluate(checkpoint_, validation_, 0).predictions;
  if (config_.variant != Variant::kOpenEnded) {
    discovery::SkillDiscovery discovery(
        client_, {.domain = config_.domain, .max_categories = config_.max_categories,
                  .user_skills = config_.user_skills, .skill_pool = {}});
    skills_ = discovery.discover(validation_, predictions_).skills;
    for (const auto& p : predictions_) item_skill_[p.item_id] = *p.assigned_skill;
  }
  report_ = student::build_report(validation_, predictions_, 0);

  if (config_.variant == Variant::kSkillTree) {
    forest_ = forest::SkillForest(*config_.caps);
    for (const auto& skill : skills_) {
      if (skill != discovery::kUncategorized) forest_ = forest_.with_tree(skill, 0);
    }
  }
  rebuild_state();
  ready_ = true;
  return state_;
}

void Environment::check_ready() const {
  if (!ready_) throw Error(ErrorCode::kInvalidArgument, "environment must be reset before stepping");
}

void Environment::evaluate_current() {
  predictions_ = student_.evaluate(checkpoint_, validation_, iteration_).predictions;
  for (auto& p : predictions_) {
    auto it = item_skill_.find(p.item_id);
    if (it != item_skill_.end()) p.assigned_skill = it->second;
  }
  report_ = student::build_report(validation_, predictions_, iteration_);
}

void Environment::rebuild_state() {
  switch (config_.variant) {
    case Variant::kOpenEnded:
      state_ = OpenEndedState{predictions_};
      break;
    case Variant::kSkillList:
      state_ = make_skill_list_state(predictions_);
      break;
    case Variant::kSkillTree: {
      SkillTreeState s{forest_, {}};
      for (const auto& [skill, score] : report_.per_skill) s.per_skill_accuracy[skill] = score.accuracy();
      state_ = std::move(s);
      break;
    }
  }
}

StepResult Environment::step(const Action& action) {
  check_ready();
  const bool direct = config_.variant != Variant::kSkillTree;
  if (direct != std::holds_alternative<GenerateData>(action)) {
    throw Error(ErrorCode::kActionType, std::string(action_kind(action)) + " is not legal in the " +
                                            std::string(to_string(config_.variant)) + " environment");
  }
  return std::visit(Overloaded{[&](const GenerateData& a) { return step_generate(a); },
                               [&](const Explore& a) { return step_explore(a); },
                               [&](const Exploit& a) { return step_exploit(a); }},
                    action);
}

StepResult Environment::step_generate(const GenerateData& action) {
  if (static_cast<std::int64_t>(action.specs.size()) > config_.data_budget) {
    throw Error(ErrorCode::kInvalidArgument, "plan has " + std::to_string(action.specs.size()) +
                                                 " specs; the budget is " + std::to_string(config_.data_budget));
  }
  DataManifest manifest;
  manifest.requested = static_cast<std::int64_t>(action.specs.size());
  if (action.specs.empty()) return finish_step({}, std::move(manifest), {});
  auto result = engine_.execute_plan(action.specs, iteration_ + 1);
  manifest.dropped = std::move(result.dropped);
  return finish_step(std::move(result.datums), std::move(manifest), {});
}

StepResult Environment::step_explore(const Explore& action) {
  const auto& tree = forest_.tree(action.skill);
  if (action.num_new_subskills < 1) throw Error(ErrorCode::kInvalidArgument, "explore needs k >= 1");
  const auto k = static_cast<std::size_t>(action.num_new_subskills);
  if (tree.subskills.size() + k > forest_.caps().max_subskills_per_tree) {
    throw Error(ErrorCode::kSubskillCapExceeded,
                "tree '" + action.skill + "' cannot take " + std::to_string(k) + " more subskills");
  }
  std::vector<std::string> existing;
  for (const auto& s : tree.subskills) existing.push_back(s.name);

  discovery::DiscoveryOptions options;
  options.domain = config_.domain;
  discovery::SkillDiscovery discovery(client_, std::move(options));
  const auto proposal = discovery.propose_subskills(action.skill, existing, action.num_new_subskills);
  auto grown = forest::grow_tree(forest_, action.skill, proposal.names);

  std::vector<std::string> notes;
  if (proposal.partial()) {
    notes.push_back("proposer returned " + std::to_string(proposal.names.size()) + " of " +
                    std::to_string(proposal.requested) + " subskills for '" + action.skill + "'");
  }
  for (const auto& name : grown.dropped_duplicates) notes.push_back("dropped duplicate subskill '" + name + "'");
  forest_ = std::move(grown.forest);
  return finish_step({}, {}, std::move(notes));
}

StepResult Environment::step_exploit(const Exploit& action) {
  auto next = action.is_noop() ? forest_ : forest::rebalance_tree(forest_, action.skill, action.deltas);
  auto result = engine_.execute_forest(next, produced_, config_.domain, iteration_ + 1);
  forest_ = std::move(next);
  for (const auto& d : result.datums) {
    ++produced_[{skill_of(d), d.provenance.subskill.value_or("")}];
  }
  DataManifest manifest;
  manifest.requested = static_cast<std::int64_t>(result.requested);
  manifest.dropped = std::move(result.dropped);
  return finish_step(std::move(result.datums), std::move(manifest), {});
}

StepResult Environment::finish_step(std::vector<TrainingDatum> datums, DataManifest manifest,
                                    std::vector<std::string> notes) {
  const double before = report_.overall_accuracy();
  StepResult out;
  out.info.notes = std::move(notes);

  manifest.rendered = static_cast<std::int64_t>(datums.size());
  for (const auto& d : datums) {
    const auto skill = skill_of(d);
    ++manifest.per_skill[skill];
    if (d.provenance.subskill) ++manifest.per_subskill[skill][*d.provenance.subskill];
  }
  auto kept = keep_fraction(datums, config_.data_fraction);
  manifest.trained = static_cast<std::int64_t>(kept.size());

  ++iteration_;
  if (!kept.empty()) {
    out.info.forward_accuracy = student_.evaluate_on_generated(checkpoint_, datums);
    checkpoint_ = student_.train(checkpoint_, kept, {.iteration = iteration_, .epochs = config_.epochs});
    out.info.trained = true;
    evaluate_current();

    if (config_.variant == Variant::kSkillTree) {
      std::map<std::pair<std::string, std::string>, std::vector<TrainingDatum>> groups;
      for (const auto& d : kept) {
        if (d.provenance.skill && d.provenance.subskill) {
          groups[{*d.provenance.skill, *d.provenance.subskill}].push_back(d);
        }
      }
      for (const auto& [key, group] : groups) {
        const auto* tree = forest_.find(key.first);
        if (!tree || !tree->find(key.second)) continue;
        if (auto acc = student_.evaluate_on_generated(checkpoint_, group)) {
          forest_ = forest::set_training_performance(forest_, key.first, key.second, *acc);
        }
      }
    }
  } else {
    report_.iteration = iteration_;
  }
  rebuild_state();

  out.state = state_;
  out.reward = report_.overall_accuracy();
  out.info.report = report_;
  out.info.delta = out.reward - before;
  out.info.manifest = std::move(manifest);
  out.info.checkpoint_id = checkpoint_.checkpoint_id;
  out.datums = std::move(datums);
  return out;
}

std::vector<TrainingDatum> keep_fraction(const std::vector<TrainingDatum>& datums, double fraction) {
  if (fraction >= 1.0) return datums;
  const auto n = static_cast<std::int64_t>(datums.size());
  const auto keep = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<TrainingDatum> out;
  out.reserve(static_cast<std::size_t>(keep));
  for (std::int64_t i = 0; i < n; ++i) {
    if ((i + 1) * keep / n > i * keep / n) out.push_back(datums[static_cast<std::size_t>(i)]);
  }
  return out;
}

State mask_state(const State& state, const Dataset& pool, std::uint64_t seed, int iteration,
                 std::size_t samples) {
  std::vector<std::size_t> order(pool.items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed_from("no-state|" + std::to_string(seed) + "|" + std::to_string(iteration)));
  rng.shuffle(order);
  order.resize(std::min(samples, order.size()));

  std::vector<EvaluatedPrediction> drawn;
  for (auto i : order) drawn.push_back({pool.items[i].item_id, "", false, std::nullopt, iteration});

  return std::visit(
      Overloaded{
          [&](const OpenEndedState&) -> State { return OpenEndedState{drawn}; },
          [&](const SkillListState& s) -> State {
            SkillListState masked;
            for (const auto& [skill, bucket] : s.per_skill) masked.per_skill[skill] = {};
            if (masked.per_skill.empty()) return masked;
            auto slot = masked.per_skill.begin();
            for (auto p : drawn) {
              p.assigned_skill = slot->first;
              slot->second.predictions.push_back(std::move(p));
              if (++slot == masked.per_skill.end()) slot = masked.per_skill.begin();
            }
            return masked;
          },
          [&](const SkillTreeState& s) -> State {
            SkillTreeState masked{s.forest, {}};
            for (const auto& [skill, acc] : s.per_skill_accuracy) masked.per_skill_accuracy[skill] = 0.0;
            return masked;
          }},
      state);
}

}  // namespace teachloop::env
