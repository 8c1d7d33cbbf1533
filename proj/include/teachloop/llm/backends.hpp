#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "teachloop/llm/provider.hpp"

namespace teachloop::llm {

struct MockOptions {
  std::uint64_t seed = 0;
  /// Probability that a skill annotation returns a wrong (but existing) skill.
  double confusion_rate = 0.0;
  /// Attempts below this index return unparseable text (exercises retries).
  int malformed_attempts = 0;
};

/// Deterministic stand-in for a chat model. Replies are a pure function of
/// (template id, variables, seed); each template module has a fixed rule:
///
///   skill_annotation   echoes `hidden_skill`, or a different entry of
///                      `skill_pool` with probability confusion_rate; null
///                      when the item carries no hidden tag
///   skill_aggregation  groups labels sharing their last word
///   subskill_proposal  "{skill}::sub{n}", n continuing past existing names
///   policy_open_ended  one spec per error tag, cycled to `budget`
///   policy_skill_list  budget split in proportion to (1 - accuracy); subskills
///                      come from error tags whose skill matches the bucket
///   datum_* / vqa_* / code_*  templated content echoing skill and subskill
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(MockOptions options = {}) : options_(options) {}

  std::string chat(const ProviderCall& call) override;
  bool deterministic() const override { return true; }
  std::string name() const override { return "mock"; }

  const MockOptions& options() const { return options_; }

 private:
  MockOptions options_;
};

struct LiveOptions {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 120;
};

/// Any OpenAI-compatible chat-completion endpoint (POST {base}/chat/completions).
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(LiveOptions options);

  std::string chat(const ProviderCall& call) override;
  bool deterministic() const override { return false; }
  std::string name() const override { return "live"; }

 private:
  LiveOptions options_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. /v1
};

/// Serves raw responses recorded in a transcript, matched by request digest.
/// Identical requests recorded more than once are served in recorded order.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& transcript);
  explicit ReplayBackend(const std::vector<nlohmann::json>& entries);

  std::string chat(const ProviderCall& call) override;
  bool deterministic() const override { return true; }
  std::string name() const override { return "replay"; }

 private:
  void load(const std::vector<nlohmann::json>& entries);

  std::mutex mutex_;
  std::map<std::string, std::deque<std::string>> responses_;
};

}  // namespace teachloop::llm
