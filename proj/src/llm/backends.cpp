#include "teachloop/llm/backends.hpp"

#include <cstdlib>

#include <httplib.h>

#include "teachloop/core/error.hpp"
#include "teachloop/core/serialize.hpp"

namespace teachloop::llm {

using nlohmann::json;

HttpChatBackend::HttpChatBackend(LiveOptions options) : options_(std::move(options)) {
  const auto scheme_end = options_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfig, "provider base_url needs a scheme: '" + options_.base_url + "'");
  }
  const auto path_start = options_.base_url.find('/', scheme_end + 3);
  origin_ = options_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : options_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpChatBackend::chat(const ProviderCall& call) {
  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const json body{{"model", options_.model},
                  {"temperature", call.sampling.temperature},
                  {"top_p", call.sampling.top_p},
                  {"messages", json::array({{{"role", "user"}, {"content", call.prompt}}})}};
  auto result = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                            "application/json");
  if (!result) {
    throw Error(ErrorCode::kProviderUnavailable,
                "chat endpoint " + origin_ + " unreachable: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw Error(ErrorCode::kProviderUnavailable,
                "chat endpoint returned HTTP " + std::to_string(result->status));
  }
  try {
    return json::parse(result->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("malformed chat response: ") + e.what());
  }
}

ReplayBackend::ReplayBackend(const std::filesystem::path& transcript) {
  load(read_jsonl(transcript));
}

ReplayBackend::ReplayBackend(const std::vector<json>& entries) { load(entries); }

void ReplayBackend::load(const std::vector<json>& entries) {
  for (const auto& entry : entries) {
    const auto template_id = entry.at("template_id").get<std::string>();
    const auto variables = entry.at("variables").get<TemplateVars>();
    const auto schema_id = entry.at("schema_id").get<std::string>();
    const int attempt = entry.at("attempt").get<int>();
    const std::string digest = request_digest(template_id, variables, schema_id, attempt);
    if (entry.contains("request_digest") && entry["request_digest"].get<std::string>() != digest) {
      throw Error(ErrorCode::kProtocol, "transcript entry for '" + template_id +
                                            "' does not match its recorded request digest");
    }
    responses_[digest].push_back(entry.at("raw_response").get<std::string>());
  }
}

std::string ReplayBackend::chat(const ProviderCall& call) {
  const std::string digest =
      request_digest(call.template_id, call.variables, call.schema_id, call.attempt);
  std::lock_guard lock(mutex_);
  auto it = responses_.find(digest);
  if (it == responses_.end() || it->second.empty()) {
    throw Error(ErrorCode::kProviderUnavailable,
                "transcript has no response for '" + call.template_id + "' (" + digest + ")");
  }
  std::string raw = std::move(it->second.front());
  it->second.pop_front();
  return raw;
}

}  // namespace teachloop::llm
