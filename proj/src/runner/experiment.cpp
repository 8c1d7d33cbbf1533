#include "teachloop/runner/experiment.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "teachloop/core/error.hpp"
#include "teachloop/core/serialize.hpp"
#include "teachloop/llm/backends.hpp"
#include "teachloop/student/external.hpp"
#include "teachloop/student/simulated.hpp"

namespace teachloop::runner {
namespace {

using nlohmann::json;

std::shared_ptr<llm::ChatBackend> make_backend(const ExperimentConfig& c) {
  if (c.provider.kind == "live") return std::make_shared<llm::HttpChatBackend>(c.provider.live);
  if (c.provider.kind == "replay") return std::make_shared<llm::ReplayBackend>(c.provider.transcript);
  llm::MockOptions options;
  options.seed = c.seed;
  options.confusion_rate = c.provider.confusion;
  options.malformed_attempts = c.provider.malformed_attempts;
  return std::make_shared<llm::MockBackend>(options);
}

std::unique_ptr<student::Student> make_student(const ExperimentConfig& c, const Dataset& validation) {
  if (c.student.kind == "external") {
    std::shared_ptr<student::TrainerTransport> transport;
    if (!c.student.command.empty()) {
      transport = std::make_shared<student::SubprocessTransport>(c.student.command);
    } else {
      transport = std::make_shared<student::HttpTransport>(c.student.url, c.student.timeout_seconds);
    }
    return std::make_unique<student::ExternalStudent>(transport, validation.domain);
  }
  auto params = c.student.params;
  params.seed = c.seed;
  return std::make_unique<student::SimulatedStudent>(params, validation);
}

std::unique_ptr<policy::Policy> make_policy(const ExperimentConfig& c, const llm::LlmClient& client,
                                            const Dataset& train) {
  const auto& kind = c.policy.kind;
  if (kind == "external") return std::make_unique<policy::ExternalPolicy>(c.policy.command);
  if (kind == "handcrafted") {
    if (c.ablation.no_state) return std::make_unique<policy::RandomSkillTreePolicy>(c.policy.handcrafted, c.seed);
    return std::make_unique<policy::HandcraftedSkillTreePolicy>(c.policy.handcrafted);
  }
  const policy::LlmPolicyOptions options{c.policy.error_sample_cap, c.seed};
  std::unique_ptr<policy::Policy> inner;
  if (kind == "open-ended") {
    inner = std::make_unique<policy::OpenEndedPolicy>(client, options);
  } else {
    inner = std::make_unique<policy::SkillListPolicy>(client, options);
  }
  if (!c.ablation.no_state) return inner;
  return std::make_unique<policy::NoStatePolicy>(std::move(inner), train, c.seed, c.ablation.no_state_samples);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::string format_accuracy(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * accuracy);
  return buf;
}

double run_cell(const ExperimentConfig& config, const std::optional<std::filesystem::path>& dir) {
  auto out = run_experiment(config, dir);
  if (out.episode.status == EpisodeStatus::kAborted) {
    throw Error(ErrorCode::kInvalidArgument, "episode aborted: " + out.episode.error.value_or(""));
  }
  return out.episode.best_validation_accuracy;
}

}  // namespace

Datasets load_datasets(const ExperimentConfig& c) {
  Datasets d;
  if (c.data.simulated) {
    const auto& s = *c.data.simulated;
    student::SimulatedDomainSpec spec;
    spec.skills = student::default_simulated_skills(s.skills, s.subskills);
    for (std::size_t i = 0; i < s.weights.size() && i < spec.skills.size(); ++i) spec.skills[i].weight = s.weights[i];
    spec.seed = s.seed.value_or(c.seed);
    spec.items = s.items;
    d.validation = student::generate_simulated_dataset(spec, "validation");
    spec.items = s.test_items;
    d.test = student::generate_simulated_dataset(spec, "test");
    spec.items = s.train_items;
    d.train = student::generate_simulated_dataset(spec, "train");
    return d;
  }
  d.validation = read_dataset(c.data.validation);
  if (!c.data.test.empty()) d.test = read_dataset(c.data.test);
  d.train = c.data.train.empty() ? d.validation : read_dataset(c.data.train);
  return d;
}

ItemLookup Experiment::lookup() const {
  const Datasets* d = &data;
  return [d](std::string_view id) -> const TaskItem* {
    if (const auto* item = d->validation.find(id)) return item;
    return d->train.find(id);
  };
}

std::unique_ptr<llm::LlmClient> make_client(const ExperimentConfig& config,
                                            std::shared_ptr<llm::TranscriptLog> transcript) {
  auto client = std::make_unique<llm::LlmClient>(make_backend(config), llm::TemplateLibrary::bundled(),
                                                 llm::SchemaRegistry::builtin(), std::move(transcript),
                                                 config.provider.max_in_flight);
  client->override_requests({config.provider.temperature, 1.0}, config.provider.max_retries);
  return client;
}

std::unique_ptr<Experiment> build_experiment(const ExperimentConfig& config,
                                             const std::optional<std::filesystem::path>& dir) {
  config.validate();
  auto e = std::make_unique<Experiment>();
  e->config = config;
  e->data = load_datasets(config);
  if (dir) {
    std::filesystem::create_directories(*dir);
    std::ofstream(*dir / "transcript.jsonl", std::ios::trunc);
    e->transcript = std::make_shared<llm::TranscriptLog>(*dir / "transcript.jsonl");
  } else {
    e->transcript = std::make_shared<llm::TranscriptLog>();
  }
  e->client = make_client(config, e->transcript);
  e->student = make_student(config, e->data.validation);
  if (config.environment.domain == DomainId::kSimulated) {
    e->engine = std::make_unique<engine::SimulatedEngine>(config.seed);
  } else {
    e->engine = std::make_unique<engine::LlmEngine>(*e->client, std::make_shared<engine::StubImagePort>(), config.seed);
  }
  e->policy = make_policy(config, *e->client, e->data.train);
  e->environment = std::make_unique<env::Environment>(config.effective_environment(), e->data.validation, *e->client,
                                                      *e->student, *e->engine);
  return e;
}

RunOutput run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& dir) {
  auto e = build_experiment(config, dir);
  if (dir) write_text(*dir / "config.yaml", config.yaml);
  const EpisodeSettings settings{config.max_iterations, config.saturation_patience};
  RunOutput out;
  out.episode = run_episode(*e->environment, *e->policy, *e->student, e->data.test.items.empty() ? nullptr : &e->data.test,
                            settings, e->lookup(), dir);
  out.analysis = analyze(out.episode.trajectory, &e->data.validation);
  if (dir) {
    auto summary = out.episode.summary();
    summary["name"] = config.name;
    summary["seed"] = config.seed;
    summary["policy"] = e->policy->name();
    summary["student"] = e->student->name();
    summary["provider"] = e->client->backend().name();
    write_text(*dir / "summary.json", summary.dump(2) + "\n");
    write_analysis(out.analysis, *dir / "analysis");
  }
  return out;
}

ReplayReport compare_trajectories(const std::vector<TrajectoryRecord>& recorded,
                                  const std::vector<TrajectoryRecord>& replayed) {
  ReplayReport r;
  r.recorded_digest = trajectory_digest(recorded);
  r.replayed_digest = trajectory_digest(replayed);
  r.recorded_records = recorded.size();
  r.replayed_records = replayed.size();
  r.identical = r.recorded_digest == r.replayed_digest;
  const std::size_t n = std::max(recorded.size(), replayed.size());
  for (std::size_t i = 0; i < n && !r.identical; ++i) {
    if (i >= recorded.size() || i >= replayed.size() || to_json(recorded[i], false) != to_json(replayed[i], false)) {
      r.first_mismatch = static_cast<int>(i < recorded.size() ? recorded[i].iteration : replayed[i].iteration);
      break;
    }
  }
  return r;
}

ReplayReport replay_directory(const std::filesystem::path& dir, bool use_transcript) {
  const auto recorded = read_trajectory(dir / "trajectory.jsonl");
  auto config = load_config(dir / "config.yaml");
  if (use_transcript) {
    config.provider.kind = "replay";
    config.provider.transcript = (dir / "transcript.jsonl").string();
  }
  if (config.provider.kind == "live") {
    throw Error(ErrorCode::kReplayRequiresDeterministicBackends,
                "the recorded run used a live provider; replay with the recorded transcript instead");
  }
  if (config.student.kind != "simulated" || config.policy.kind == "external") {
    throw Error(ErrorCode::kReplayRequiresDeterministicBackends,
                "replay needs the simulated student and a built-in policy");
  }
  if (recorded.empty()) return compare_trajectories(recorded, {});
  const auto out = run_experiment(config, std::nullopt);
  return compare_trajectories(recorded, out.episode.trajectory);
}

SweepResult sweep(const ExperimentConfig& config, int seeds, int jobs,
                  const std::optional<std::filesystem::path>& dir) {
  if (seeds < 1) throw Error(ErrorCode::kConfig, "sweep needs at least one seed");
  struct Cell {
    std::uint64_t seed;
    bool no_state;
    double accuracy = 0.0;
  };
  std::vector<Cell> cells;
  for (int i = 0; i < seeds; ++i) {
    cells.push_back({config.seed + static_cast<std::uint64_t>(i), false});
    cells.push_back({config.seed + static_cast<std::uint64_t>(i), true});
  }
  auto cell_config = [&](const Cell& cell) {
    return parse_config(config.yaml, {"seed=" + std::to_string(cell.seed),
                                      std::string("ablation.no_state=") + (cell.no_state ? "true" : "false")});
  };
  auto cell_dir = [&](const Cell& cell) -> std::optional<std::filesystem::path> {
    if (!dir) return std::nullopt;
    return *dir / ((cell.no_state ? "no-state-seed-" : "with-state-seed-") + std::to_string(cell.seed));
  };

  if (jobs <= 1) {
    for (auto& cell : cells) cell.accuracy = run_cell(cell_config(cell), cell_dir(cell));
  } else {
    // Each worker process runs one cell and writes its accuracy to a pipe.
    std::map<pid_t, std::pair<std::size_t, int>> running;
    std::size_t next = 0;
    std::vector<std::string> failures;
    auto reap_one = [&] {
      int status = 0;
      const pid_t pid = ::waitpid(-1, &status, 0);
      if (pid < 0) throw Error(ErrorCode::kIo, "waitpid failed");
      auto it = running.find(pid);
      if (it == running.end()) return;
      const auto [index, fd] = it->second;
      running.erase(it);
      std::string text;
      char buf[256];
      ssize_t n;
      while ((n = ::read(fd, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
      ::close(fd);
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        failures.push_back("seed " + std::to_string(cells[index].seed) + ": " + text);
        return;
      }
      cells[index].accuracy = std::stod(text);
    };
    while (next < cells.size() || !running.empty()) {
      if (next < cells.size() && running.size() < static_cast<std::size_t>(jobs)) {
        int fds[2];
        if (::pipe(fds) != 0) throw Error(ErrorCode::kIo, "pipe failed");
        std::fflush(nullptr);
        const pid_t pid = ::fork();
        if (pid < 0) throw Error(ErrorCode::kIo, "fork failed");
        if (pid == 0) {
          ::close(fds[0]);
          std::string reply;
          int code = 0;
          try {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", run_cell(cell_config(cells[next]), cell_dir(cells[next])));
            reply = buf;
          } catch (const std::exception& ex) {
            reply = ex.what();
            code = 1;
          }
          [[maybe_unused]] auto written = ::write(fds[1], reply.data(), reply.size());
          ::_exit(code);
        }
        ::close(fds[1]);
        running[pid] = {next, fds[0]};
        ++next;
      } else {
        reap_one();
      }
    }
    if (!failures.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep failed: " + failures.front());
  }

  SweepResult result;
  std::ostringstream table;
  table << "seed  with-state  no-state  difference\n";
  for (int i = 0; i < seeds; ++i) {
    const SweepRow row{cells[2 * i].seed, cells[2 * i].accuracy, cells[2 * i + 1].accuracy};
    result.mean_with_state += row.with_state / seeds;
    result.mean_no_state += row.no_state / seeds;
    char line[128];
    std::snprintf(line, sizeof line, "%-4llu  %10s  %8s  %+10.2f\n", static_cast<unsigned long long>(row.seed),
                  format_accuracy(row.with_state).c_str(), format_accuracy(row.no_state).c_str(),
                  100.0 * (row.with_state - row.no_state));
    table << line;
    result.rows.push_back(row);
  }
  char line[128];
  std::snprintf(line, sizeof line, "mean  %10s  %8s  %+10.2f\n", format_accuracy(result.mean_with_state).c_str(),
                format_accuracy(result.mean_no_state).c_str(),
                100.0 * (result.mean_with_state - result.mean_no_state));
  table << line;
  result.table = table.str();
  return result;
}

}  // namespace teachloop::runner
