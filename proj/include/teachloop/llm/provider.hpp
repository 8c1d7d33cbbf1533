#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachloop/llm/schemas.hpp"
#include "teachloop/llm/templates.hpp"

namespace teachloop::llm {

struct SamplingConfig {
  double temperature = 0.0;
  double top_p = 1.0;
};

struct CompletionRequest {
  std::string template_id;
  TemplateVars variables;
  std::string schema_id;
  SamplingConfig sampling;
  int max_retries = 2;
  /// Optional request-specific check run after schema validation; a failure
  /// is fed back to the model like a schema error.
  Validator semantic_check;
};

struct StructuredResponse {
  nlohmann::json payload;
  std::string raw_text;
  int attempts = 0;
};

/// What a backend sees for one attempt.
struct ProviderCall {
  const std::string& template_id;
  const TemplateVars& variables;
  const std::string& schema_id;
  const SamplingConfig& sampling;
  std::string prompt;  // rendered template plus any validation feedback
  int attempt = 0;
};

/// Transport behind the port: a live endpoint, a mock, or a transcript.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns raw model text; throws Error(kProviderUnavailable) on transport failure.
  virtual std::string chat(const ProviderCall& call) = 0;
  /// True when responses are a pure function of the request.
  virtual bool deterministic() const = 0;
  virtual std::string name() const = 0;
};

/// Digest identifying one attempt of one request; transcripts are keyed by it.
std::string request_digest(const std::string& template_id, const TemplateVars& variables,
                           const std::string& schema_id, int attempt);

/// Append-only JSON Lines log of every exchange.
class TranscriptLog {
 public:
  TranscriptLog() = default;  // in-memory only
  explicit TranscriptLog(std::filesystem::path path);

  void append(const ProviderCall& call, const std::string& raw_response);
  std::vector<nlohmann::json> entries() const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> entries_;
};

/// The port every LLM-touching module depends on: renders a template,
/// calls the backend, parses and validates the structured reply, and
/// re-asks with the validation error appended until retries run out.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<ChatBackend> backend, TemplateLibrary templates,
            SchemaRegistry schemas = SchemaRegistry::builtin(),
            std::shared_ptr<TranscriptLog> transcript = nullptr,
            std::size_t max_in_flight = 4);

  StructuredResponse complete(const CompletionRequest& request) const;

  struct Outcome {
    std::optional<StructuredResponse> response;
    std::exception_ptr error;
  };
  /// Runs requests with at most max_in_flight concurrent calls; results keep
  /// request order.
  std::vector<Outcome> complete_all(const std::vector<CompletionRequest>& requests) const;

  /// Replaces the sampling settings and retry budget of every request.
  void override_requests(SamplingConfig sampling, int max_retries) {
    sampling_override_ = sampling;
    retries_override_ = max_retries;
  }

  const ChatBackend& backend() const { return *backend_; }
  const TemplateLibrary& templates() const { return templates_; }
  const std::shared_ptr<TranscriptLog>& transcript() const { return transcript_; }
  std::size_t max_in_flight() const { return max_in_flight_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  TemplateLibrary templates_;
  SchemaRegistry schemas_;
  std::shared_ptr<TranscriptLog> transcript_;
  std::size_t max_in_flight_;
  std::optional<SamplingConfig> sampling_override_;
  std::optional<int> retries_override_;
};

}  // namespace teachloop::llm
