#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachloop/student/student.hpp"

namespace teachloop::student {

/// One request in flight at a time; replies come back in request order.
class TrainerTransport {
 public:
  virtual ~TrainerTransport() = default;
  /// Sends one JSON line and returns the parsed reply.
  nlohmann::json exchange(const nlohmann::json& request) { return exchange_raw(request.dump()); }
  /// Sends `line` verbatim (it must not contain a newline). Throws
  /// Error(kTrainerUnavailable) on transport failure and Error(kProtocol) when
  /// the reply is not a JSON object.
  virtual nlohmann::json exchange_raw(const std::string& line) = 0;
  virtual std::string describe() const = 0;
};

/// Runs `command` through /bin/sh and speaks NDJSON over its stdin/stdout.
class SubprocessTransport : public TrainerTransport {
 public:
  explicit SubprocessTransport(std::string command);
  ~SubprocessTransport() override;
  SubprocessTransport(const SubprocessTransport&) = delete;
  SubprocessTransport& operator=(const SubprocessTransport&) = delete;

  nlohmann::json exchange_raw(const std::string& line) override;
  std::string describe() const override { return "subprocess: " + command_; }
  /// Asks the worker to shut down and reaps it. Safe to call twice.
  void close();

 private:
  std::string read_line();

  std::mutex mutex_;
  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// POSTs each request body to `url` and reads the JSON reply.
class HttpTransport : public TrainerTransport {
 public:
  explicit HttpTransport(std::string url, int timeout_seconds = 600);

  nlohmann::json exchange_raw(const std::string& line) override;
  std::string describe() const override { return "http: " + url_; }

 private:
  std::mutex mutex_;
  std::string url_;
  std::string origin_;
  std::string path_;
  int timeout_seconds_;
};

/// Protocol-level shape check of a worker reply to `op`.
std::optional<std::string> validate_reply(const std::string& op, const nlohmann::json& reply,
                                          std::size_t expected_predictions = 0);

/// A student whose training and inference live in an external worker.
class ExternalStudent : public Student {
 public:
  ExternalStudent(std::shared_ptr<TrainerTransport> transport, TaskDomain domain);
  ~ExternalStudent() override;

  StudentCheckpoint initial() override;
  StudentCheckpoint train(const StudentCheckpoint& from, const std::vector<TrainingDatum>& datums,
                          const TrainOptions& options) override;
  Evaluation evaluate(const StudentCheckpoint& checkpoint, const Dataset& dataset,
                      int iteration) override;
  std::optional<double> evaluate_on_generated(const StudentCheckpoint& checkpoint,
                                              const std::vector<TrainingDatum>& datums) override;
  bool deterministic() const override { return false; }
  std::string name() const override { return "external"; }

  void shutdown();

 private:
  std::vector<std::string> predict(const StudentCheckpoint& checkpoint,
                                   const std::vector<TaskItem>& items);

  std::shared_ptr<TrainerTransport> transport_;
  TaskDomain domain_;
  bool shut_down_ = false;
};

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Exercises a worker over the wire: reply schemas, ordering, error-path
/// liveness, checkpoint immutability, and (for memorizing workers) recall of
/// trained pairs. Ends by sending shutdown.
std::vector<ConformanceCheck> run_conformance_suite(TrainerTransport& transport);

}  // namespace teachloop::student
