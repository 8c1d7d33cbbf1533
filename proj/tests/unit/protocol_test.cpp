#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <netinet/in.h>
#include <unistd.h>

#include "teachloop/core/error.hpp"
#include "teachloop/student/external.hpp"

namespace teachloop::student {
namespace {

using nlohmann::json;

std::string worker(const std::string& flags = "") {
  return std::string(TEACHLOOP_FAKE_WORKER) + (flags.empty() ? "" : " " + flags);
}

TrainingDatum datum(const std::string& q, const std::string& a) {
  TrainingDatum d;
  d.instruction = q;
  d.response = a;
  d.provenance.spec_digest = "t";
  return d;
}

Dataset items_like(const std::vector<TrainingDatum>& datums) {
  Dataset d;
  d.domain = TaskDomain::defaults_for(DomainId::kMath);
  for (std::size_t i = 0; i < datums.size(); ++i) {
    TaskItem item;
    item.item_id = "item-" + std::to_string(i);
    item.instruction = datums[i].instruction;
    item.gold_answer = datums[i].response;
    item.true_skill = "hidden";
    d.items.push_back(item);
  }
  return d;
}

void expect_all_pass(const std::vector<ConformanceCheck>& checks) {
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}

TEST(Protocol, SubprocessWorkerPassesConformanceSuite) {
  SubprocessTransport transport(worker());
  expect_all_pass(run_conformance_suite(transport));
}

TEST(Protocol, SuiteFlagsOutOfOrderReplies) {
  SubprocessTransport transport(worker("--reverse"));
  const auto checks = run_conformance_suite(transport);
  auto order = std::find_if(checks.begin(), checks.end(),
                            [](const auto& c) { return c.name == "evaluate reply schema and order"; });
  ASSERT_NE(order, checks.end());
  EXPECT_FALSE(order->passed);
}

TEST(Protocol, MemorizingStudentScoresPerfectlyOnItsTrainingData) {
  ExternalStudent s(std::make_shared<SubprocessTransport>(worker()),
                    TaskDomain::defaults_for(DomainId::kMath));
  const std::vector<TrainingDatum> data = {datum("1+1?", "2"), datum("Capital of Peru?", "Lima"),
                                           datum("3*3?", "9")};
  const auto trained = s.train(s.initial(), data, {.iteration = 1});
  ASSERT_TRUE(trained.external_handle);
  EXPECT_EQ(trained.iteration, 1);
  EXPECT_DOUBLE_EQ(s.evaluate(trained, items_like(data), 1).report.overall_accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(s.evaluate(s.initial(), items_like(data), 0).report.overall_accuracy(), 0.0);
  EXPECT_EQ(s.evaluate_on_generated(trained, data), 1.0);
  EXPECT_EQ(s.train(trained, {}, {.iteration = 2}), trained);
}

TEST(Protocol, OutOfOrderEvaluateIsProtocolError) {
  ExternalStudent s(std::make_shared<SubprocessTransport>(worker("--reverse")),
                    TaskDomain::defaults_for(DomainId::kMath));
  const std::vector<TrainingDatum> data = {datum("a", "1"), datum("b", "2")};
  const auto trained = s.train(s.initial(), data, {.iteration = 1});
  try {
    s.evaluate(trained, items_like(data), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  }
}

TEST(Protocol, DeadWorkerIsTrainerUnavailable) {
  ExternalStudent s(std::make_shared<SubprocessTransport>(worker("--crash-on-train")),
                    TaskDomain::defaults_for(DomainId::kMath));
  try {
    s.train(s.initial(), {datum("a", "1")}, {.iteration = 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTrainerUnavailable);
  }
}

TEST(Protocol, WorkerErrorReplySurfaces) {
  auto transport = std::make_shared<SubprocessTransport>(worker());
  ExternalStudent s(transport, TaskDomain::defaults_for(DomainId::kMath));
  StudentCheckpoint bogus;
  bogus.checkpoint_id = "external:nope";
  bogus.external_handle = "nope";
  try {
    s.evaluate(bogus, items_like({datum("a", "1")}), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTrainerUnavailable);
    EXPECT_NE(std::string(e.what()).find("unknown-checkpoint"), std::string::npos);
  }
}

TEST(Protocol, ValidateReplyShapes) {
  EXPECT_FALSE(validate_reply("train", json{{"ok", true}, {"checkpoint", "c1"}}));
  EXPECT_TRUE(validate_reply("train", json{{"ok", true}}));
  EXPECT_TRUE(validate_reply("train", json{{"ok", "yes"}, {"checkpoint", "c1"}}));
  EXPECT_FALSE(validate_reply("evaluate", json{{"ok", false}, {"error", "bad-request"}, {"message", "m"}}));
  EXPECT_TRUE(validate_reply("evaluate", json{{"ok", false}, {"error", "bad-request"}}));
  EXPECT_TRUE(validate_reply("evaluate", json{{"ok", true}, {"predictions", {{{"item_id", "a"}}}}}));
  EXPECT_TRUE(validate_reply("evaluate",
                             json{{"ok", true}, {"predictions", {{{"item_id", "a"}, {"predicted_answer", "x"}}}}},
                             2));
  EXPECT_FALSE(validate_reply("shutdown", json{{"ok", true}}));
}

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

TEST(Protocol, HttpWorkerPassesConformanceSuite) {
  const int port = free_port();
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::execl(TEACHLOOP_FAKE_WORKER, TEACHLOOP_FAKE_WORKER, "--http", std::to_string(port).c_str(),
            static_cast<char*>(nullptr));
    ::_exit(127);
  }
  HttpTransport transport("http://127.0.0.1:" + std::to_string(port) + "/", 5);
  bool ready = false;
  for (int i = 0; i < 100 && !ready; ++i) {
    try {
      transport.exchange_raw("{}");
      ready = true;
    } catch (const Error&) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  ASSERT_TRUE(ready);
  expect_all_pass(run_conformance_suite(transport));
  ::kill(pid, SIGTERM);
  ::waitpid(pid, nullptr, 0);
}

TEST(Protocol, UnreachableHttpWorkerIsTrainerUnavailable) {
  HttpTransport transport("http://127.0.0.1:" + std::to_string(free_port()) + "/", 1);
  try {
    transport.exchange({{"op", "shutdown"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTrainerUnavailable);
  }
}

}  // namespace
}  // namespace teachloop::student
