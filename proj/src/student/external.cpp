#include "teachloop/student/external.hpp"

#include <csignal>
#include <cstring>
#include <functional>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "teachloop/core/answers.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/serialize.hpp"

namespace teachloop::student {
namespace {

using nlohmann::json;

json parse_reply(const std::string& text, const std::string& who) {
  json reply;
  try {
    reply = json::parse(text);
  } catch (const json::exception&) {
    throw Error(ErrorCode::kProtocol, who + " replied with invalid JSON: " + text.substr(0, 200));
  }
  if (!reply.is_object()) throw Error(ErrorCode::kProtocol, who + " reply is not a JSON object");
  return reply;
}

void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kTrainerUnavailable,
                  std::string("cannot write to trainer worker: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

// Throws the worker's own error, or kProtocol when the reply is malformed.
void require_ok(const std::string& op, const json& reply, std::size_t expected = 0) {
  if (auto problem = validate_reply(op, reply, expected)) {
    throw Error(ErrorCode::kProtocol, "bad '" + op + "' reply: " + *problem);
  }
  if (!reply["ok"].get<bool>()) {
    throw Error(ErrorCode::kTrainerUnavailable, "trainer worker failed '" + op + "': " +
                                                    reply["error"].get<std::string>() + ": " +
                                                    reply.value("message", ""));
  }
}

// Workers only see what a real student would: no hidden tags or thresholds.
std::vector<TaskItem> public_view(const std::vector<TaskItem>& items) {
  std::vector<TaskItem> out = items;
  for (auto& item : out) {
    item.true_skill.reset();
    item.true_subskill.reset();
    item.latent_pass_threshold.reset();
  }
  return out;
}

}  // namespace

SubprocessTransport::SubprocessTransport(std::string command) : command_(std::move(command)) {
  std::signal(SIGPIPE, SIG_IGN);
  int in[2];
  int out[2];
  if (::pipe2(in, O_CLOEXEC) != 0 || ::pipe2(out, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kTrainerUnavailable, "cannot create pipes for trainer worker");
  }
  pid_ = ::fork();
  if (pid_ < 0) throw Error(ErrorCode::kTrainerUnavailable, "cannot fork trainer worker");
  if (pid_ == 0) {
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in[0]);
  ::close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
}

SubprocessTransport::~SubprocessTransport() {
  try {
    close();
  } catch (...) {
  }
}

std::string SubprocessTransport::read_line() {
  for (;;) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return line;
    }
    char chunk[4096];
    const auto n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::kTrainerUnavailable, "trainer worker exited (" + command_ + ")");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json SubprocessTransport::exchange_raw(const std::string& line) {
  std::lock_guard lock(mutex_);
  if (pid_ <= 0) throw Error(ErrorCode::kTrainerUnavailable, "trainer worker is closed");
  write_all(to_child_, line + "\n");
  return parse_reply(read_line(), "trainer worker");
}

void SubprocessTransport::close() {
  std::lock_guard lock(mutex_);
  if (pid_ <= 0) return;
  try {
    write_all(to_child_, R"({"op":"shutdown"})" "\n");
    read_line();
  } catch (const Error&) {
    // Worker already gone or already shut down.
  }
  ::close(to_child_);
  ::close(from_child_);
  int status = 0;
  for (int waited = 0; ::waitpid(pid_, &status, WNOHANG) == 0; ++waited) {
    if (waited == 200) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  pid_ = -1;
}

HttpTransport::HttpTransport(std::string url, int timeout_seconds)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds) {
  const auto scheme_end = url_.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfig, "trainer url needs a scheme: '" + url_ + "'");
  }
  const auto path_start = url_.find('/', scheme_end + 3);
  origin_ = url_.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
}

json HttpTransport::exchange_raw(const std::string& line) {
  std::lock_guard lock(mutex_);
  httplib::Client client(origin_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  auto result = client.Post(path_, line, "application/json");
  if (!result) {
    throw Error(ErrorCode::kTrainerUnavailable,
                "trainer endpoint " + url_ + " unreachable: " + httplib::to_string(result.error()));
  }
  return parse_reply(result->body, "trainer endpoint");
}

std::optional<std::string> validate_reply(const std::string& op, const json& reply,
                                          std::size_t expected_predictions) {
  if (!reply.is_object()) return "reply is not an object";
  if (!reply.contains("ok") || !reply["ok"].is_boolean()) return "missing boolean 'ok'";
  if (!reply["ok"].get<bool>()) {
    if (!reply.contains("error") || !reply["error"].is_string()) return "error reply without 'error' code";
    if (!reply.contains("message") || !reply["message"].is_string()) return "error reply without 'message'";
    return std::nullopt;
  }
  if (op == "train") {
    if (!reply.contains("checkpoint") || !reply["checkpoint"].is_string() ||
        reply["checkpoint"].get_ref<const std::string&>().empty()) {
      return "train reply without a checkpoint id";
    }
  } else if (op == "evaluate") {
    if (!reply.contains("predictions") || !reply["predictions"].is_array()) {
      return "evaluate reply without a predictions array";
    }
    for (const auto& p : reply["predictions"]) {
      if (!p.is_object() || !p.contains("item_id") || !p["item_id"].is_string() ||
          !p.contains("predicted_answer") || !p["predicted_answer"].is_string()) {
        return "prediction entries need string item_id and predicted_answer";
      }
      if (p.contains("correct") && !p["correct"].is_boolean()) return "'correct' must be boolean";
    }
    if (expected_predictions && reply["predictions"].size() != expected_predictions) {
      return "expected " + std::to_string(expected_predictions) + " predictions, got " +
             std::to_string(reply["predictions"].size());
    }
  } else if (op != "shutdown") {
    return "unknown op '" + op + "'";
  }
  return std::nullopt;
}

ExternalStudent::ExternalStudent(std::shared_ptr<TrainerTransport> transport, TaskDomain domain)
    : transport_(std::move(transport)), domain_(domain) {
  if (!transport_) throw Error(ErrorCode::kTrainerUnavailable, "no trainer transport configured");
}

ExternalStudent::~ExternalStudent() {
  try {
    shutdown();
  } catch (...) {
  }
}

void ExternalStudent::shutdown() {
  if (shut_down_) return;
  shut_down_ = true;
  require_ok("shutdown", transport_->exchange({{"op", "shutdown"}}));
}

StudentCheckpoint ExternalStudent::initial() {
  StudentCheckpoint c;
  c.checkpoint_id = "external:initial";
  return c;
}

StudentCheckpoint ExternalStudent::train(const StudentCheckpoint& from,
                                         const std::vector<TrainingDatum>& datums,
                                         const TrainOptions& options) {
  if (datums.empty()) return from;
  json hyper = options.hyperparams;
  hyper["epochs"] = options.epochs;
  const json request{{"op", "train"},
                     {"checkpoint", from.external_handle ? json(*from.external_handle) : json(nullptr)},
                     {"datums", datums},
                     {"hyperparams", hyper}};
  const json reply = transport_->exchange(request);
  require_ok("train", reply);
  StudentCheckpoint next;
  next.external_handle = reply["checkpoint"].get<std::string>();
  next.checkpoint_id = "external:" + *next.external_handle;
  next.iteration = options.iteration;
  return next;
}

std::vector<std::string> ExternalStudent::predict(const StudentCheckpoint& checkpoint,
                                                  const std::vector<TaskItem>& items) {
  const json request{
      {"op", "evaluate"},
      {"checkpoint", checkpoint.external_handle ? json(*checkpoint.external_handle) : json(nullptr)},
      {"items", public_view(items)}};
  const json reply = transport_->exchange(request);
  require_ok("evaluate", reply, items.size());
  std::vector<std::string> answers;
  answers.reserve(items.size());
  const auto& predictions = reply["predictions"];
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (predictions[i]["item_id"] != items[i].item_id) {
      throw Error(ErrorCode::kProtocol, "evaluate reply out of order at position " + std::to_string(i));
    }
    answers.push_back(predictions[i]["predicted_answer"].get<std::string>());
  }
  return answers;
}

Evaluation ExternalStudent::evaluate(const StudentCheckpoint& checkpoint, const Dataset& dataset,
                                     int iteration) {
  if (dataset.items.empty()) throw Error(ErrorCode::kInvalidArgument, "empty evaluation set");
  const json request{
      {"op", "evaluate"},
      {"checkpoint", checkpoint.external_handle ? json(*checkpoint.external_handle) : json(nullptr)},
      {"items", public_view(dataset.items)}};
  const json reply = transport_->exchange(request);
  require_ok("evaluate", reply, dataset.items.size());

  Evaluation out;
  const auto& predictions = reply["predictions"];
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const auto& item = dataset.items[i];
    const auto& p = predictions[i];
    if (p["item_id"] != item.item_id) {
      throw Error(ErrorCode::kProtocol, "evaluate reply out of order at position " + std::to_string(i));
    }
    EvaluatedPrediction e;
    e.item_id = item.item_id;
    e.predicted_answer = p["predicted_answer"].get<std::string>();
    // Workers that run their own scoring (e.g. code tests) report it directly.
    e.correct = p.contains("correct")
                    ? p["correct"].get<bool>()
                    : compare_answers(e.predicted_answer, item.gold_answer, domain_.mode);
    e.iteration = iteration;
    out.predictions.push_back(std::move(e));
  }
  out.report = build_report(dataset, out.predictions, iteration);
  return out;
}

std::optional<double> ExternalStudent::evaluate_on_generated(
    const StudentCheckpoint& checkpoint, const std::vector<TrainingDatum>& datums) {
  if (datums.empty()) return std::nullopt;
  std::vector<TaskItem> items;
  for (std::size_t i = 0; i < datums.size(); ++i) {
    TaskItem item;
    item.item_id = "generated-" + std::to_string(i);
    item.instruction = datums[i].instruction;
    item.media_ref = datums[i].media_ref;
    item.gold_answer = datums[i].response;
    items.push_back(std::move(item));
  }
  const auto answers = predict(checkpoint, items);
  Score score;
  for (std::size_t i = 0; i < items.size(); ++i) {
    score.add(compare_answers(answers[i], items[i].gold_answer, ComparisonMode::kExactMatchNormalized));
  }
  return score.accuracy();
}

std::vector<ConformanceCheck> run_conformance_suite(TrainerTransport& transport) {
  std::vector<ConformanceCheck> checks;
  auto check = [&checks](const std::string& name, const std::function<std::string()>& body) {
    ConformanceCheck c{name, false, ""};
    try {
      c.detail = body();
      c.passed = c.detail.empty();
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  auto datum = [](const std::string& q, const std::string& a) {
    TrainingDatum d;
    d.instruction = q;
    d.response = a;
    d.provenance.spec_digest = "conformance";
    return d;
  };
  auto item = [](const std::string& id, const std::string& q) {
    TaskItem t;
    t.item_id = id;
    t.instruction = q;
    t.gold_answer = "";
    return t;
  };
  auto evaluate = [&transport](const json& checkpoint, const std::vector<TaskItem>& items) {
    return transport.exchange({{"op", "evaluate"}, {"checkpoint", checkpoint}, {"items", items}});
  };
  auto answers_of = [](const json& reply) {
    std::map<std::string, std::string> out;
    for (const auto& p : reply["predictions"]) out[p["item_id"]] = p["predicted_answer"];
    return out;
  };

  const std::vector<TrainingDatum> first = {datum("What is 2 + 2?", "4"),
                                            datum("Name the capital of France.", "Paris")};
  const std::vector<TaskItem> probe = {item("q2", "Name the capital of France."),
                                       item("q1", "What is 2 + 2?"),
                                       item("q3", "Is the sky green?")};
  std::string base;
  std::string child;

  check("train reply schema", [&] {
    const json reply = transport.exchange(
        {{"op", "train"}, {"checkpoint", nullptr}, {"datums", first}, {"hyperparams", json::object()}});
    if (auto problem = validate_reply("train", reply)) return *problem;
    if (!reply["ok"].get<bool>()) return "train failed: " + reply.dump();
    base = reply["checkpoint"];
    return std::string();
  });

  check("evaluate reply schema and order", [&] {
    const json reply = evaluate(base, probe);
    if (auto problem = validate_reply("evaluate", reply, probe.size())) return *problem;
    if (!reply["ok"].get<bool>()) return "evaluate failed: " + reply.dump();
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (reply["predictions"][i]["item_id"] != probe[i].item_id) return std::string("predictions out of request order");
    }
    return std::string();
  });

  check("recalls trained pairs", [&] {
    auto got = answers_of(evaluate(base, probe));
    if (got["q1"] != "4" || got["q2"] != "Paris") return "got q1='" + got["q1"] + "' q2='" + got["q2"] + "'";
    return std::string();
  });

  check("abstains on unseen items", [&] {
    auto got = answers_of(evaluate(base, probe));
    return got["q3"].empty() ? std::string() : "expected empty answer, got '" + got["q3"] + "'";
  });

  check("malformed request keeps worker alive", [&] {
    for (const std::string bad : {"{this is not json", R"({"op":"fly"})", R"({"op":"train"})"}) {
      const json reply = transport.exchange_raw(bad);
      if (auto problem = validate_reply("shutdown", reply)) return "for " + bad + ": " + *problem;
      if (reply["ok"].get<bool>()) return "accepted malformed request " + bad;
      if (reply["error"] != "bad-request") return "error code for " + bad + " was " + reply["error"].dump();
    }
    const json reply = evaluate(base, probe);
    return reply.value("ok", false) ? std::string() : "worker did not recover: " + reply.dump();
  });

  check("unknown checkpoint is an error reply", [&] {
    const json reply = evaluate("no-such-checkpoint", probe);
    if (auto problem = validate_reply("evaluate", reply)) return *problem;
    return reply["ok"].get<bool>() ? std::string("evaluate accepted an unknown checkpoint") : std::string();
  });

  check("checkpoints are immutable", [&] {
    const json reply = transport.exchange({{"op", "train"},
                                           {"checkpoint", base},
                                           {"datums", std::vector<TrainingDatum>{datum("Is the sky green?", "no")}},
                                           {"hyperparams", json::object()}});
    if (auto problem = validate_reply("train", reply)) return *problem;
    child = reply["checkpoint"];
    if (child == base) return std::string("retraining reused the parent checkpoint id");
    auto old_answers = answers_of(evaluate(base, probe));
    auto new_answers = answers_of(evaluate(child, probe));
    if (!old_answers["q3"].empty()) return std::string("parent checkpoint changed after retraining");
    if (new_answers["q3"] != "no" || new_answers["q1"] != "4") {
      return std::string("child checkpoint lost or missed training data");
    }
    return std::string();
  });

  check("shutdown acknowledged", [&] {
    const json reply = transport.exchange({{"op", "shutdown"}});
    if (auto problem = validate_reply("shutdown", reply)) return *problem;
    return reply["ok"].get<bool>() ? std::string() : "shutdown refused: " + reply.dump();
  });
  return checks;
}

}  // namespace teachloop::student
