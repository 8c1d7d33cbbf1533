#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "teachloop/core/state.hpp"
#include "teachloop/core/types.hpp"
#include "teachloop/llm/provider.hpp"

namespace teachloop::policy {

struct PolicyContext {
  DomainId domain = DomainId::kSimulated;
  std::int64_t budget = 500;
  int iteration = 0;
  /// Resolves item ids seen in a state (validation or train samples).
  std::function<const TaskItem*(std::string_view)> lookup;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual Action act(const State& state, const PolicyContext& context) = 0;
  /// Clears any per-episode bookkeeping.
  virtual void reset() {}
  /// True when `action` means the policy has nothing left to do in `state`.
  virtual bool is_terminal(const Action& action, const State& state) const;
  virtual std::string name() const = 0;

  /// Remarks about the last act() call, such as remapped skills.
  const std::vector<std::string>& notes() const { return notes_; }

 protected:
  std::vector<std::string> notes_;
};

/// Up to `cap` incorrect predictions. When tags exist the sample is split
/// across skills in proportion to their error counts; selection is seeded.
std::vector<EvaluatedPrediction> sample_errors(const std::vector<EvaluatedPrediction>& predictions,
                                               const PolicyContext& context, std::size_t cap,
                                               std::uint64_t seed);

struct LlmPolicyOptions {
  std::size_t error_sample_cap = 50;
  std::uint64_t seed = 0;
};

/// Verbalizes the error list and asks the provider for data specs.
class OpenEndedPolicy : public Policy {
 public:
  OpenEndedPolicy(const llm::LlmClient& client, LlmPolicyOptions options = {});
  Action act(const State& state, const PolicyContext& context) override;
  std::string name() const override { return "open-ended"; }

 private:
  const llm::LlmClient& client_;
  LlmPolicyOptions options_;
};

/// Verbalizes per-skill accuracy and errors; specs naming a skill outside
/// the state are remapped to Uncategorized.
class SkillListPolicy : public Policy {
 public:
  SkillListPolicy(const llm::LlmClient& client, LlmPolicyOptions options = {});
  Action act(const State& state, const PolicyContext& context) override;
  std::string name() const override { return "skill-list"; }

 private:
  const llm::LlmClient& client_;
  LlmPolicyOptions options_;
};

struct HandcraftedConfig {
  std::size_t max_subskills = 5;
  std::int64_t per_subskill_cap = 300;
  std::int64_t per_action_cap = 100;
  int k_new = 2;
  bool start_with_explore = true;
};

/// Grows each tree by alternating Explore with allocation resets until it
/// holds max_subskills, then fills every subskill to the cap. Trees are
/// visited round-robin in name order.
class HandcraftedSkillTreePolicy : public Policy {
 public:
  explicit HandcraftedSkillTreePolicy(HandcraftedConfig config = {});
  Action act(const State& state, const PolicyContext& context) override;
  void reset() override;
  bool is_terminal(const Action& action, const State& state) const override;
  std::string name() const override { return "handcrafted-skill-tree"; }

  bool tree_full(const forest::SkillTree& tree) const;
  /// Σ over trees of 2·max/k_new + max·⌈cap/action_cap⌉.
  std::int64_t action_bound(std::size_t trees) const;

 private:
  HandcraftedConfig config_;
  std::map<std::string, std::int64_t> visits_;
  std::size_t cursor_ = 0;
};

/// Skill-tree No-State ablation: a fair coin picks Explore (random tree) or
/// Exploit (+per_action_cap on a random subskill, clipped at the cap).
class RandomSkillTreePolicy : public Policy {
 public:
  RandomSkillTreePolicy(HandcraftedConfig config, std::uint64_t seed);
  Action act(const State& state, const PolicyContext& context) override;
  std::string name() const override { return "no-state-skill-tree"; }

 private:
  HandcraftedConfig config_;
  std::uint64_t seed_;
};

/// Feeds the wrapped direct-generation policy a masked state of random
/// train samples instead of the student's errors.
class NoStatePolicy : public Policy {
 public:
  NoStatePolicy(std::unique_ptr<Policy> inner, Dataset train_pool, std::uint64_t seed,
                std::size_t samples = 50);
  Action act(const State& state, const PolicyContext& context) override;
  void reset() override { inner_->reset(); }
  bool is_terminal(const Action& action, const State& state) const override;
  std::string name() const override { return "no-state(" + inner_->name() + ")"; }

 private:
  std::unique_ptr<Policy> inner_;
  Dataset pool_;
  std::uint64_t seed_;
  std::size_t samples_;
};

/// Runs `command` once per decision: context and state JSON on stdin, one
/// action JSON object on stdout.
class ExternalPolicy : public Policy {
 public:
  explicit ExternalPolicy(std::string command);
  Action act(const State& state, const PolicyContext& context) override;
  std::string name() const override { return "external"; }

 private:
  std::string command_;
};

}  // namespace teachloop::policy
