#include "teachloop/runner/episode.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/serialize.hpp"

namespace teachloop::runner {
namespace {

using nlohmann::json;

json manifest_json(const env::DataManifest& m) {
  json dropped = json::array();
  for (const auto& d : m.dropped) {
    dropped.push_back({{"index", d.index}, {"spec_digest", d.spec_digest}, {"reason", d.reason}});
  }
  return {{"requested", m.requested}, {"rendered", m.rendered},     {"trained", m.trained},
          {"per_skill", m.per_skill}, {"per_subskill", m.per_subskill}, {"dropped", dropped}};
}

env::DataManifest manifest_from(const json& j) {
  env::DataManifest m;
  m.requested = j.at("requested").get<std::int64_t>();
  m.rendered = j.at("rendered").get<std::int64_t>();
  m.trained = j.at("trained").get<std::int64_t>();
  m.per_skill = j.at("per_skill").get<std::map<std::string, std::int64_t>>();
  m.per_subskill = j.at("per_subskill").get<std::map<std::string, std::map<std::string, std::int64_t>>>();
  for (const auto& d : j.at("dropped")) {
    m.dropped.push_back({d.at("index").get<std::size_t>(), d.at("spec_digest").get<std::string>(),
                         d.at("reason").get<std::string>()});
  }
  return m;
}

std::string padded(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iteration-%03d", iteration);
  return buf;
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - since).count();
}

void write_snapshot(const std::filesystem::path& dir, const TrajectoryRecord& r, const State& state) {
  json snap{{"iteration", r.iteration}, {"state_digest", r.state_digest}, {"report", r.report}};
  if (const auto* tree = std::get_if<SkillTreeState>(&state)) {
    snap["forest"] = tree->forest;
    snap["forest_table"] = forest::render_table(tree->forest);
  }
  std::ofstream(dir / "snapshots" / (padded(r.iteration) + ".json")) << snap.dump(2) << "\n";
}

}  // namespace

json to_json(const TrajectoryRecord& r, bool with_clock) {
  json j{{"iteration", r.iteration},
         {"state_digest", r.state_digest},
         {"action", r.action ? *r.action : json(nullptr)},
         {"manifest", manifest_json(r.manifest)},
         {"checkpoint_id", r.checkpoint_id},
         {"report", r.report},
         {"forward_accuracy", r.forward_accuracy ? json(*r.forward_accuracy) : json(nullptr)},
         {"trained", r.trained},
         {"reward", r.reward},
         {"delta", r.delta},
         {"notes", r.notes}};
  if (with_clock) j["wall_clock_ms"] = r.wall_clock_ms;
  return j;
}

TrajectoryRecord record_from_json(const json& j) {
  TrajectoryRecord r;
  try {
    r.iteration = j.at("iteration").get<int>();
    r.state_digest = j.at("state_digest").get<std::string>();
    if (!j.at("action").is_null()) r.action = j.at("action");
    r.manifest = manifest_from(j.at("manifest"));
    r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    r.report = j.at("report").get<PerformanceReport>();
    if (!j.at("forward_accuracy").is_null()) r.forward_accuracy = j.at("forward_accuracy").get<double>();
    r.trained = j.at("trained").get<bool>();
    r.reward = j.at("reward").get<double>();
    r.delta = j.at("delta").get<double>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    r.wall_clock_ms = j.value("wall_clock_ms", std::int64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed trajectory record: ") + e.what());
  }
  return r;
}

std::string trajectory_digest(const std::vector<TrajectoryRecord>& trajectory) {
  json all = json::array();
  for (const auto& r : trajectory) all.push_back(to_json(r, false));
  return json_digest(all);
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::vector<TrajectoryRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(record_from_json(row));
  return out;
}

std::optional<std::size_t> select_best(const std::vector<double>& accuracies) {
  if (accuracies.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < accuracies.size(); ++i) {
    if (accuracies[i] > accuracies[best]) best = i;
  }
  return best;
}

std::vector<const TrajectoryRecord*> candidate_records(const std::vector<TrajectoryRecord>& trajectory) {
  std::vector<const TrajectoryRecord*> out;
  for (const auto& r : trajectory) {
    if (r.iteration == 0 || r.trained) out.push_back(&r);
  }
  return out;
}

std::string_view to_string(EpisodeStatus status) {
  switch (status) {
    case EpisodeStatus::kCompleted: return "completed";
    case EpisodeStatus::kSaturated: return "saturated";
    case EpisodeStatus::kTerminal: return "terminal";
    case EpisodeStatus::kAborted: return "aborted";
  }
  return "unknown";
}

json EpisodeResult::summary() const {
  json j{{"status", to_string(status)},
         {"error", error ? json(*error) : json(nullptr)},
         {"iterations", trajectory.empty() ? 0 : trajectory.back().iteration},
         {"best_iteration", best_iteration},
         {"best_validation_accuracy", best_validation_accuracy},
         {"best_checkpoint", best_checkpoint},
         {"trajectory_digest", digest}};
  if (test_report) {
    j["test_accuracy"] = test_report->overall_accuracy();
    j["test_report"] = *test_report;
  } else {
    j["test_accuracy"] = nullptr;
    j["test_report"] = nullptr;
  }
  return j;
}

EpisodeResult run_episode(env::Environment& environment, policy::Policy& policy, student::Student& student,
                          const Dataset* test, const EpisodeSettings& settings, ItemLookup lookup,
                          const std::optional<std::filesystem::path>& dir) {
  if (settings.max_iterations < 1 || settings.saturation_patience < 1) {
    throw Error(ErrorCode::kConfig, "max_iterations and saturation_patience must be at least 1");
  }
  EpisodeResult out;
  if (dir) {
    std::filesystem::create_directories(*dir / "data");
    std::filesystem::create_directories(*dir / "snapshots");
    std::ofstream(*dir / "trajectory.jsonl", std::ios::trunc);
  }
  std::map<int, student::StudentCheckpoint> checkpoints;

  auto log = [&](TrajectoryRecord r, const State& state, const std::vector<TrainingDatum>& datums) {
    if (dir) {
      append_jsonl(*dir / "trajectory.jsonl", to_json(r));
      if (!datums.empty()) write_jsonl_of(*dir / "data" / (padded(r.iteration) + ".jsonl"), datums);
      write_snapshot(*dir, r, state);
    }
    out.trajectory.push_back(std::move(r));
  };

  try {
    policy.reset();
    auto started = std::chrono::steady_clock::now();
    State state = environment.reset();
    {
      TrajectoryRecord r;
      r.state_digest = state_digest(state);
      r.checkpoint_id = environment.checkpoint().checkpoint_id;
      r.report = environment.report();
      r.reward = r.report.overall_accuracy();
      r.wall_clock_ms = elapsed_ms(started);
      checkpoints[0] = environment.checkpoint();
      log(std::move(r), state, {});
    }

    double best_so_far = out.trajectory.front().reward;
    int stale = 0;
    for (int t = 1; t <= settings.max_iterations; ++t) {
      started = std::chrono::steady_clock::now();
      const policy::PolicyContext context{environment.config().domain, environment.config().data_budget, t, lookup};
      const Action action = policy.act(state, context);
      if (policy.is_terminal(action, state)) {
        out.status = EpisodeStatus::kTerminal;
        break;
      }
      auto step = environment.step(action);

      TrajectoryRecord r;
      r.iteration = t;
      r.state_digest = state_digest(step.state);
      r.action = action_to_json(action);
      r.manifest = std::move(step.info.manifest);
      r.checkpoint_id = step.info.checkpoint_id;
      r.report = std::move(step.info.report);
      r.forward_accuracy = step.info.forward_accuracy;
      r.trained = step.info.trained;
      r.reward = step.reward;
      r.delta = step.info.delta;
      r.notes = policy.notes();
      r.notes.insert(r.notes.end(), step.info.notes.begin(), step.info.notes.end());
      r.wall_clock_ms = elapsed_ms(started);
      const bool trained = r.trained;
      const double reward = r.reward;
      log(std::move(r), step.state, step.datums);
      state = std::move(step.state);

      if (!trained) continue;
      checkpoints[t] = environment.checkpoint();
      if (reward > best_so_far) {
        best_so_far = reward;
        stale = 0;
      } else if (++stale >= settings.saturation_patience) {
        out.status = EpisodeStatus::kSaturated;
        break;
      }
    }
  } catch (const Error& e) {
    out.status = EpisodeStatus::kAborted;
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    out.status = EpisodeStatus::kAborted;
    out.error = e.what();
  }

  const auto candidates = candidate_records(out.trajectory);
  std::vector<double> accuracies;
  for (const auto* r : candidates) accuracies.push_back(r->reward);
  if (auto best = select_best(accuracies)) {
    const auto* r = candidates[*best];
    out.best_iteration = r->iteration;
    out.best_validation_accuracy = r->reward;
    out.best_checkpoint = checkpoints.at(r->iteration);
    if (test && out.status != EpisodeStatus::kAborted) {
      try {
        out.test_report = student.evaluate(out.best_checkpoint, *test, r->iteration).report;
      } catch (const Error& e) {
        out.status = EpisodeStatus::kAborted;
        out.error = std::string(to_string(e.code())) + ": " + e.what();
      }
    }
  }
  out.digest = trajectory_digest(out.trajectory);
  return out;
}

}  // namespace teachloop::runner
