#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "teachloop/core/types.hpp"
#include "teachloop/llm/provider.hpp"

namespace teachloop::discovery {

/// Reserved skill for items the annotator could not label.
inline constexpr const char* kUncategorized = "Uncategorized";

struct SkillAssignment {
  std::map<std::string, std::string> item_to_raw;      // item_id -> raw skill
  std::map<std::string, std::string> raw_to_category;  // raw skill -> category
};

struct DiscoveryResult {
  std::vector<std::string> skills;  // category names in discovery order
  SkillAssignment assignment;
};

struct SubskillProposal {
  std::vector<std::string> names;
  int requested = 0;
  bool partial() const { return static_cast<int>(names.size()) < requested; }
};

struct DiscoveryOptions {
  DomainId domain = DomainId::kSimulated;
  int max_categories = 15;
  /// When set, stage 2 is skipped and raw labels map to the nearest of these.
  std::optional<std::vector<std::string>> user_skills;
  /// Candidate labels the mock may confuse a hidden tag with. Filled from the
  /// dataset's hidden tags by discover() when empty.
  std::vector<std::string> skill_pool;
};

class SkillDiscovery {
 public:
  SkillDiscovery(const llm::LlmClient& client, DiscoveryOptions options);

  /// Stage 1: the raw skill an item exercises, or kUncategorized.
  std::string annotate_instance(const TaskItem& item) const;

  /// Stage 2: partitions raw labels into at most max_categories categories.
  std::map<std::string, std::string> aggregate_skills(const std::vector<std::string>& labels) const;

  /// Runs both stages over the items behind `predictions` and fills each
  /// prediction's assigned_skill.
  DiscoveryResult discover(const Dataset& dataset,
                           std::vector<EvaluatedPrediction>& predictions) const;

  SubskillProposal propose_subskills(const std::string& skill,
                                     const std::vector<std::string>& existing, int k) const;

  const DiscoveryOptions& options() const { return options_; }

 private:
  llm::CompletionRequest annotation_request(const TaskItem& item,
                                            const std::vector<std::string>& pool) const;
  std::string template_id(const std::string& module) const;

  const llm::LlmClient& client_;
  DiscoveryOptions options_;
};

/// Index into `candidates` with the largest token overlap (Jaccard) with
/// `label`; nullopt when no candidate shares a token.
std::optional<std::size_t> nearest_by_tokens(const std::string& label,
                                             const std::vector<std::string>& candidates);

/// Hidden skill tags present in a dataset, sorted.
std::vector<std::string> hidden_skills(const Dataset& dataset);

}  // namespace teachloop::discovery
