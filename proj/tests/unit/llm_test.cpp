#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "teachloop/core/error.hpp"
#include "teachloop/llm/backends.hpp"
#include "teachloop/llm/provider.hpp"

namespace teachloop::llm {
namespace {

using nlohmann::json;

const std::vector<std::string> kPool = {"Algebra", "Geometry", "Number Theory", "Probability",
                                        "Calculus"};

CompletionRequest annotation(const std::string& instruction, const std::string& gold,
                             std::optional<std::string> hidden) {
  CompletionRequest r;
  r.template_id = "skill_annotation/simulated";
  r.schema_id = "skill_label";
  r.variables = {{"instruction", instruction},
                 {"gold_answer", gold},
                 {"skill_pool", json(kPool).dump()}};
  if (hidden) r.variables["hidden_skill"] = *hidden;
  return r;
}

LlmClient mock_client(MockOptions options = {}, std::shared_ptr<TranscriptLog> log = nullptr) {
  return LlmClient(std::make_shared<MockBackend>(options), TemplateLibrary::bundled(),
                   SchemaRegistry::builtin(), std::move(log));
}

TEST(MockProvider, EchoesHiddenSkill) {
  auto client = mock_client();
  auto out = client.complete(annotation("Solve 2x + 3 = 7.", "2", "Algebra"));
  EXPECT_EQ(out.payload, (json{{"skill", "Algebra"}}));
  EXPECT_EQ(out.attempts, 1);
}

TEST(MockProvider, UntaggedItemGivesNullSkill) {
  auto client = mock_client();
  auto out = client.complete(annotation("What is 1+1?", "2", std::nullopt));
  EXPECT_TRUE(out.payload["skill"].is_null());
}

TEST(MockProvider, SameRequestIsByteIdentical) {
  auto client = mock_client({.seed = 3, .confusion_rate = 0.5});
  for (int i = 0; i < 20; ++i) {
    auto req = annotation("Item " + std::to_string(i), "0", kPool[i % kPool.size()]);
    EXPECT_EQ(client.complete(req).raw_text, client.complete(req).raw_text);
  }
}

TEST(MockProvider, ConfusionCountIsFixedBySeed) {
  auto client = mock_client({.seed = 7, .confusion_rate = 0.2});
  int confused = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& hidden = kPool[i % kPool.size()];
    auto out = client.complete(annotation("Item " + std::to_string(i), std::to_string(i), hidden));
    const auto label = out.payload["skill"].get<std::string>();
    EXPECT_NE(std::find(kPool.begin(), kPool.end(), label), kPool.end());
    if (label != hidden) ++confused;
  }
  EXPECT_EQ(confused, 199);
}

TEST(MockProvider, ConfusionZeroNeverConfuses) {
  auto client = mock_client({.seed = 7, .confusion_rate = 0.0});
  for (int i = 0; i < 200; ++i) {
    const auto& hidden = kPool[i % kPool.size()];
    EXPECT_EQ(client.complete(annotation("Item " + std::to_string(i), "0", hidden)).payload["skill"],
              hidden);
  }
}

TEST(MockProvider, AggregationGroupsBySuffix) {
  auto client = mock_client();
  CompletionRequest r;
  r.template_id = "skill_aggregation/math";
  r.schema_id = "skill_categories";
  r.variables = {{"labels", json::array({"Linear Algebra", "Abstract Algebra", "Geometry"}).dump()},
                 {"max_categories", "5"}};
  auto out = client.complete(r);
  EXPECT_EQ(out.payload["categories"],
            (json::array({{{"name", "algebra"}, {"members", {"Linear Algebra", "Abstract Algebra"}}},
                          {{"name", "Geometry"}, {"members", {"Geometry"}}}})));
}

TEST(MockProvider, SubskillProposalContinuesNumbering) {
  auto client = mock_client();
  CompletionRequest r;
  r.template_id = "subskill_proposal/simulated";
  r.schema_id = "subskill_list";
  r.variables = {{"skill", "Algebra"},
                 {"existing", json::array({"Algebra::sub1", "algebra::SUB2"}).dump()},
                 {"count", "2"}};
  EXPECT_EQ(client.complete(r).payload["subskills"],
            (json::array({"Algebra::sub3", "Algebra::sub4"})));
}

TEST(MockProvider, SkillListSplitsBudgetByError) {
  auto client = mock_client();
  CompletionRequest r;
  r.template_id = "policy_skill_list/simulated";
  r.schema_id = "data_specs";
  json skills = json::array({{{"skill", "A"}, {"accuracy", 0.75}, {"error_tags", json::array()}},
                             {{"skill", "B"}, {"accuracy", 0.25}, {"error_tags", json::array()}}});
  r.variables = {{"skills", skills.dump()}, {"skill_report", "-"}, {"budget", "8"},
                 {"domain", "simulated"}};
  int a = 0, b = 0;
  const auto out = client.complete(r);
  for (const auto& spec : out.payload["specs"]) {
    (spec["skill"] == "A" ? a : b)++;
  }
  EXPECT_EQ(a, 2);
  EXPECT_EQ(b, 6);
}

TEST(Provider, RetriesMalformedReplyThenSucceeds) {
  auto log = std::make_shared<TranscriptLog>();
  auto client = mock_client({.malformed_attempts = 2}, log);
  auto out = client.complete(annotation("x", "1", "Algebra"));
  EXPECT_EQ(out.attempts, 3);
  EXPECT_EQ(out.payload["skill"], "Algebra");
  ASSERT_EQ(log->size(), 3u);
}

TEST(Provider, ExhaustedRetriesCarryLastRawText) {
  auto client = mock_client({.malformed_attempts = 10});
  auto req = annotation("x", "1", "Algebra");
  req.max_retries = 1;
  try {
    client.complete(req);
    FAIL() << "expected StructuredParseFailure";
  } catch (const StructuredParseFailure& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStructuredParseFailure);
    EXPECT_EQ(e.last_raw_text(), "Sure! Here is what you asked for:");
    EXPECT_FALSE(e.semantic());
  }
}

TEST(Provider, RetryPromptCarriesValidationError) {
  struct Recorder : ChatBackend {
    std::vector<std::string> prompts;
    std::string chat(const ProviderCall& call) override {
      prompts.push_back(call.prompt);
      return call.attempt == 0 ? R"({"skill": ""})" : R"({"skill": "Algebra"})";
    }
    bool deterministic() const override { return true; }
    std::string name() const override { return "recorder"; }
  };
  auto backend = std::make_shared<Recorder>();
  LlmClient client(backend, TemplateLibrary::bundled());
  client.complete(annotation("x", "1", std::nullopt));
  ASSERT_EQ(backend->prompts.size(), 2u);
  EXPECT_EQ(backend->prompts[0].find("rejected"), std::string::npos);
  EXPECT_NE(backend->prompts[1].find("must be non-empty"), std::string::npos);
}

TEST(Provider, SemanticCheckFailureIsFlagged) {
  auto client = mock_client();
  auto req = annotation("x", "1", "Algebra");
  req.semantic_check = [](const json&) -> std::optional<std::string> { return "never good"; };
  try {
    client.complete(req);
    FAIL();
  } catch (const StructuredParseFailure& e) {
    EXPECT_TRUE(e.semantic());
  }
}

TEST(Provider, MissingTemplateOrSchemaIsRejected) {
  auto client = mock_client();
  auto req = annotation("x", "1", "Algebra");
  req.template_id = "no_such_module/math";
  EXPECT_THROW(
      {
        try {
          client.complete(req);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::kTemplateMissing);
          throw;
        }
      },
      Error);
  req = annotation("x", "1", "Algebra");
  req.variables.erase("gold_answer");
  EXPECT_THROW(client.complete(req), Error);
  req = annotation("x", "1", "Algebra");
  req.schema_id = "unregistered";
  EXPECT_THROW(client.complete(req), Error);
}

TEST(Provider, CompleteAllKeepsRequestOrder) {
  auto client = mock_client();
  std::vector<CompletionRequest> reqs;
  for (int i = 0; i < 40; ++i) reqs.push_back(annotation("i" + std::to_string(i), "0", kPool[i % 5]));
  auto outcomes = client.complete_all(reqs);
  ASSERT_EQ(outcomes.size(), reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    ASSERT_TRUE(outcomes[i].response);
    EXPECT_EQ(outcomes[i].response->payload["skill"], kPool[i % 5]);
  }
}

TEST(Transcript, ReplayReproducesResponses) {
  auto log = std::make_shared<TranscriptLog>();
  auto live = mock_client({.seed = 11, .confusion_rate = 0.4, .malformed_attempts = 1}, log);
  std::vector<std::string> raw;
  for (int i = 0; i < 10; ++i) raw.push_back(live.complete(annotation("q" + std::to_string(i), "0", kPool[i % 5])).raw_text);

  LlmClient replay(std::make_shared<ReplayBackend>(log->entries()), TemplateLibrary::bundled());
  for (int i = 0; i < 10; ++i) {
    auto out = replay.complete(annotation("q" + std::to_string(i), "0", kPool[i % 5]));
    EXPECT_EQ(out.raw_text, raw[static_cast<std::size_t>(i)]);
    EXPECT_EQ(out.attempts, 2);
  }
}

TEST(Transcript, EntriesCarryRequiredFields) {
  auto log = std::make_shared<TranscriptLog>();
  mock_client({}, log).complete(annotation("q", "0", "Algebra"));
  const auto entry = log->entries().at(0);
  for (const char* key : {"request_digest", "template_id", "variables", "raw_response", "timestamp"}) {
    EXPECT_TRUE(entry.contains(key)) << key;
  }
}

TEST(Transcript, UnknownRequestIsProviderUnavailable) {
  LlmClient replay(std::make_shared<ReplayBackend>(std::vector<json>{}), TemplateLibrary::bundled());
  try {
    replay.complete(annotation("q", "0", "Algebra"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
  }
}

TEST(Transcript, TamperedEntryIsRejected) {
  auto log = std::make_shared<TranscriptLog>();
  mock_client({}, log).complete(annotation("q", "0", "Algebra"));
  auto entries = log->entries();
  entries[0]["variables"]["instruction"] = "something else";
  try {
    ReplayBackend backend(entries);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  }
}

TEST(Transcript, FixtureReplaysRecordedResponses) {
  LlmClient client(std::make_shared<ReplayBackend>(
                       std::filesystem::path(TEACHLOOP_FIXTURE_DIR) / "transcript.jsonl"),
                   TemplateLibrary::bundled());
  auto label = client.complete(annotation("Solve for x: 3x - 5 = 10.", "5", std::nullopt));
  EXPECT_EQ(label.payload["skill"], "Solving Linear Equations");

  CompletionRequest datum;
  datum.template_id = "datum_math/math";
  datum.schema_id = "math_datum";
  datum.variables = {{"instruction", "A two-step linear equation."},
                     {"skill", "Algebra"},
                     {"subskill", "Solving Linear Equations"}};
  auto out = client.complete(datum);
  EXPECT_EQ(out.payload["final_answer"], "4");

  CompletionRequest vqa;
  vqa.template_id = "vqa_questions/vqa";
  vqa.schema_id = "vqa_questions";
  vqa.variables = {{"description", "A wooden table next to a glass window."},
                   {"skill", "Material Identification"},
                   {"subskill", "Wood vs Glass"},
                   {"num_questions", "1"}};
  auto q = client.complete(vqa).payload["questions"].at(0);
  EXPECT_EQ(q["answer"], "yes");
}

class LocalChatServer {
 public:
  explicit LocalChatServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalChatServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(LiveProvider, ParsesChatCompletionReply) {
  ::setenv("TEACHLOOP_TEST_KEY", "secret-token", 1);
  std::string seen_auth, seen_model;
  LocalChatServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    auto body = json::parse(req.body);
    seen_model = body["model"];
    json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", R"({"skill": "Geometry"})"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  LlmClient client(std::make_shared<HttpChatBackend>(LiveOptions{server.base_url(), "tiny", "TEACHLOOP_TEST_KEY", 5}),
                   TemplateLibrary::bundled());
  auto out = client.complete(annotation("x", "1", std::nullopt));
  EXPECT_EQ(out.payload["skill"], "Geometry");
  EXPECT_EQ(seen_auth, "Bearer secret-token");
  EXPECT_EQ(seen_model, "tiny");
}

TEST(LiveProvider, ServerErrorIsProviderUnavailable) {
  LocalChatServer server([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  HttpChatBackend backend(LiveOptions{server.base_url(), "tiny", "UNSET_KEY_VAR", 5});
  LlmClient client(std::make_shared<HttpChatBackend>(backend), TemplateLibrary::bundled());
  try {
    client.complete(annotation("x", "1", std::nullopt));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProviderUnavailable);
  }
}

TEST(LiveProvider, BaseUrlNeedsScheme) {
  EXPECT_THROW(HttpChatBackend(LiveOptions{"localhost:8080", "m"}), Error);
}

}  // namespace
}  // namespace teachloop::llm
