#include "teachloop/llm/provider.hpp"

#include <chrono>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/parallel.hpp"
#include "teachloop/core/serialize.hpp"

namespace teachloop::llm {

std::string request_digest(const std::string& template_id, const TemplateVars& variables,
                           const std::string& schema_id, int attempt) {
  return json_digest(nlohmann::json{{"template_id", template_id},
                                    {"variables", variables},
                                    {"schema_id", schema_id},
                                    {"attempt", attempt}});
}

TranscriptLog::TranscriptLog(std::filesystem::path path) : path_(std::move(path)) {}

void TranscriptLog::append(const ProviderCall& call, const std::string& raw_response) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  nlohmann::json entry{
      {"request_digest",
       request_digest(call.template_id, call.variables, call.schema_id, call.attempt)},
      {"template_id", call.template_id},
      {"variables", call.variables},
      {"schema_id", call.schema_id},
      {"attempt", call.attempt},
      {"raw_response", raw_response},
      {"timestamp", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
  std::lock_guard lock(mutex_);
  if (path_) append_jsonl(*path_, entry);
  entries_.push_back(std::move(entry));
}

std::vector<nlohmann::json> TranscriptLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t TranscriptLog::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

LlmClient::LlmClient(std::shared_ptr<ChatBackend> backend, TemplateLibrary templates,
                     SchemaRegistry schemas, std::shared_ptr<TranscriptLog> transcript,
                     std::size_t max_in_flight)
    : backend_(std::move(backend)),
      templates_(std::move(templates)),
      schemas_(std::move(schemas)),
      transcript_(std::move(transcript)),
      max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {
  if (!backend_) throw Error(ErrorCode::kProviderUnavailable, "no chat backend configured");
}

StructuredResponse LlmClient::complete(const CompletionRequest& request) const {
  if (!schemas_.has(request.schema_id)) {
    throw Error(ErrorCode::kInvalidArgument, "unregistered schema '" + request.schema_id + "'");
  }
  const std::string base_prompt = templates_.render(request.template_id, request.variables);

  std::string feedback;
  std::string last_raw;
  bool last_semantic = false;
  const SamplingConfig& sampling = sampling_override_ ? *sampling_override_ : request.sampling;
  const int attempts = std::max(0, retries_override_.value_or(request.max_retries)) + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    ProviderCall call{request.template_id, request.variables, request.schema_id,
                      sampling, base_prompt, attempt};
    if (!feedback.empty()) {
      call.prompt += "\n\nYour previous reply was rejected: " + feedback +
                     "\nReply again with a single JSON object that fixes this.";
    }
    last_raw = backend_->chat(call);
    if (transcript_) transcript_->append(call, last_raw);

    nlohmann::json payload;
    try {
      payload = extract_json_object(last_raw);
    } catch (const nlohmann::json::exception& e) {
      feedback = std::string("invalid JSON (") + e.what() + ")";
      last_semantic = false;
      continue;
    }
    if (auto problem = schemas_.validate(request.schema_id, payload)) {
      feedback = *problem;
      last_semantic = false;
      continue;
    }
    if (request.semantic_check) {
      if (auto problem = request.semantic_check(payload)) {
        feedback = *problem;
        last_semantic = true;
        continue;
      }
    }
    return StructuredResponse{std::move(payload), std::move(last_raw), attempt + 1};
  }
  throw StructuredParseFailure("'" + request.template_id + "' gave no valid '" +
                                   request.schema_id + "' reply after " +
                                   std::to_string(attempts) + " attempts: " + feedback,
                               last_raw, last_semantic);
}

std::vector<LlmClient::Outcome> LlmClient::complete_all(
    const std::vector<CompletionRequest>& requests) const {
  std::vector<Outcome> outcomes(requests.size());
  parallel_for_index(requests.size(), max_in_flight_, [&](std::size_t i) {
    try {
      outcomes[i].response = complete(requests[i]);
    } catch (...) {
      outcomes[i].error = std::current_exception();
    }
  });
  return outcomes;
}

}  // namespace teachloop::llm
