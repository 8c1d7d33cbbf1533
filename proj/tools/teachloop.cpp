#include <CLI/CLI.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "teachloop/core/error.hpp"
#include "teachloop/core/serialize.hpp"
#include "teachloop/discovery/skill_discovery.hpp"
#include "teachloop/forest/skill_forest.hpp"
#include "teachloop/runner/analysis.hpp"
#include "teachloop/runner/config.hpp"
#include "teachloop/runner/experiment.hpp"
#include "teachloop/student/external.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace teachloop;

namespace {

runner::ExperimentConfig config_from(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return runner::parse_config("", overrides, fs::current_path());
  return runner::load_config(path, overrides);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::string percent(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * accuracy);
  return buf;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out) {
  const auto config = config_from(config_path, overrides);
  const fs::path dir = out.empty() ? fs::path("runs") / (config.name + "-seed-" + std::to_string(config.seed)) : fs::path(out);
  const auto result = runner::run_experiment(config, dir);
  const auto& e = result.episode;
  std::cout << result.analysis.summary << "\n"
            << "status: " << runner::to_string(e.status) << (e.error ? " (" + *e.error + ")" : "") << "\n"
            << "best iteration: " << e.best_iteration << "\n"
            << "best validation accuracy: " << percent(e.best_validation_accuracy) << "\n";
  if (e.test_report) std::cout << "test accuracy: " << percent(e.test_report->overall_accuracy()) << "\n";
  std::cout << "trajectory digest: " << e.digest << "\n"
            << "written to " << dir.string() << "\n";
  return e.status == runner::EpisodeStatus::kAborted ? 1 : 0;
}

int cmd_replay(const std::string& dir, bool use_transcript) {
  const auto report = runner::replay_directory(dir, use_transcript);
  std::cout << "recorded: " << report.recorded_digest << " (" << report.recorded_records << " records)\n"
            << "replayed: " << report.replayed_digest << " (" << report.replayed_records << " records)\n";
  if (report.identical) {
    std::cout << "identical\n";
    return 0;
  }
  std::cout << "MISMATCH";
  if (report.first_mismatch) std::cout << " at iteration " << *report.first_mismatch;
  std::cout << "\n";
  return 1;
}

int cmd_analyze(const std::string& input, const std::string& validation, const std::string& out) {
  fs::path trajectory = input;
  if (fs::is_directory(trajectory)) trajectory /= "trajectory.jsonl";
  std::optional<Dataset> data;
  if (!validation.empty()) data = read_dataset(validation);
  const auto analysis = runner::analyze(runner::read_trajectory(trajectory), data ? &*data : nullptr);
  const fs::path dir = out.empty() ? trajectory.parent_path() / "analysis" : fs::path(out);
  runner::write_analysis(analysis, dir);
  std::cout << analysis.summary << "\nwritten to " << dir.string() << "\n";
  return 0;
}

int cmd_discover(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& dataset_path, const std::string& predictions_path, const std::string& out) {
  const auto config = config_from(config_path, overrides);
  const Dataset dataset =
      dataset_path.empty() ? runner::load_datasets(config).validation : read_dataset(dataset_path);
  std::vector<EvaluatedPrediction> predictions;
  if (predictions_path.empty()) {
    for (const auto& item : dataset.items) predictions.push_back({item.item_id, "", false, std::nullopt, 0});
  } else {
    predictions = read_jsonl_as<EvaluatedPrediction>(predictions_path);
  }
  auto transcript = std::make_shared<llm::TranscriptLog>(fs::path(out) / "transcript.jsonl");
  fs::create_directories(out);
  std::ofstream(fs::path(out) / "transcript.jsonl", std::ios::trunc).close();
  const auto client = runner::make_client(config, transcript);
  discovery::DiscoveryOptions options;
  options.domain = config.environment.domain;
  options.max_categories = config.environment.max_categories;
  options.user_skills = config.environment.user_skills;
  const discovery::SkillDiscovery discovery(*client, options);
  const auto result = discovery.discover(dataset, predictions);

  write_file(fs::path(out) / "skills.json",
             json{{"skills", result.skills}, {"raw_to_category", result.assignment.raw_to_category}}.dump(2) + "\n");
  std::vector<json> rows;
  for (const auto& p : predictions) {
    auto raw = result.assignment.item_to_raw.find(p.item_id);
    rows.push_back({{"item_id", p.item_id},
                    {"raw_skill", raw == result.assignment.item_to_raw.end() ? json(nullptr) : json(raw->second)},
                    {"skill", p.assigned_skill ? json(*p.assigned_skill) : json(nullptr)}});
  }
  write_jsonl(fs::path(out) / "assignments.jsonl", rows);
  write_jsonl_of(fs::path(out) / "predictions.jsonl", predictions);
  std::cout << result.skills.size() << " skills:\n";
  for (const auto& s : result.skills) std::cout << "  " << s << "\n";
  std::cout << "written to " << out << "\n";
  return 0;
}

int cmd_forest_dump(const std::string& input, int iteration, const std::string& json_out) {
  fs::path path = input;
  if (fs::is_directory(path)) {
    const auto snapshots = path / "snapshots";
    if (iteration >= 0) {
      char name[64];
      std::snprintf(name, sizeof name, "iteration-%03d.json", iteration);
      path = snapshots / name;
    } else {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(snapshots)) files.push_back(entry.path());
      if (files.empty()) throw Error(ErrorCode::kIo, "no snapshots in " + snapshots.string());
      std::sort(files.begin(), files.end());
      path = files.back();
    }
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  json doc = json::parse(in);
  if (doc.contains("forest")) doc = doc.at("forest");
  if (doc.is_null()) throw Error(ErrorCode::kInvalidArgument, path.string() + " holds no skill forest");
  const auto forest = doc.get<forest::SkillForest>();
  const json canonical = forest;
  std::cout << forest::render_table(forest) << "\n";
  if (json_out.empty()) {
    std::cout << canonical.dump(2) << "\n";
  } else {
    write_file(json_out, canonical.dump(2) + "\n");
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides, int seeds, int jobs,
              const std::string& out) {
  const auto config = config_from(config_path, overrides);
  std::optional<fs::path> dir;
  if (!out.empty()) dir = out;
  const auto result = runner::sweep(config, seeds, jobs, dir);
  std::cout << result.table;
  if (dir) write_file(*dir / "sweep.txt", result.table);
  return 0;
}

int cmd_protocol_check(const std::string& command, const std::string& url, int timeout) {
  if (command.empty() == url.empty()) throw Error(ErrorCode::kConfig, "give exactly one of --command or --url");
  std::unique_ptr<student::TrainerTransport> transport;
  if (!command.empty()) {
    transport = std::make_unique<student::SubprocessTransport>(command);
  } else {
    transport = std::make_unique<student::HttpTransport>(url, timeout);
  }
  int failures = 0;
  for (const auto& check : student::run_conformance_suite(*transport)) {
    std::cout << (check.passed ? "PASS " : "FAIL ") << check.name;
    if (!check.detail.empty()) std::cout << ": " << check.detail;
    std::cout << "\n";
    failures += !check.passed;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-generation agent testbed: run, replay and analyze teaching episodes."};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "YAML experiment config (defaults apply when omitted)");
    cmd->add_option("--set", overrides, "Override a config value, e.g. --set environment.data_budget=200");
  };

  std::string out;
  auto* run = app.add_subcommand("run", "Run one episode from a config file");
  add_config(run);
  std::uint64_t seed = 0;
  auto* seed_opt = run->add_option("--seed", seed, "Episode seed");
  run->add_option("-o,--out", out, "Episode directory (default runs/<name>-seed-<seed>)");

  std::string dir;
  bool use_transcript = false;
  auto* replay = app.add_subcommand("replay", "Re-run a recorded episode and compare digests");
  replay->add_option("dir", dir, "Episode directory")->required();
  replay->add_flag("--use-transcript", use_transcript, "Serve provider calls from the recorded transcript");

  std::string validation;
  auto* analyze = app.add_subcommand("analyze", "Write analysis tables for a trajectory");
  analyze->add_option("trajectory", dir, "Episode directory or trajectory JSONL")->required();
  analyze->add_option("--validation", validation, "Validation dataset JSONL for skill shares");
  analyze->add_option("-o,--out", out, "Output directory (default <episode>/analysis)");

  auto* skills = app.add_subcommand("skills", "Skill discovery");
  skills->require_subcommand(1);
  std::string dataset_path, predictions_path;
  auto* discover = skills->add_subcommand("discover", "Annotate and group skills for a prediction set");
  add_config(discover);
  discover->add_option("--dataset", dataset_path, "Dataset JSONL (default: the config's validation set)");
  discover->add_option("--predictions", predictions_path, "Predictions JSONL (default: every dataset item)");
  discover->add_option("-o,--out", out, "Output directory")->required();

  auto* forest_cmd = app.add_subcommand("forest", "Skill-forest utilities");
  forest_cmd->require_subcommand(1);
  int iteration = -1;
  std::string json_out;
  auto* dump = forest_cmd->add_subcommand("dump", "Print a forest snapshot as a table and JSON");
  dump->add_option("input", dir, "Episode directory, snapshot file or forest JSON")->required();
  dump->add_option("--iteration", iteration, "Snapshot iteration (default: the last one)");
  dump->add_option("--json", json_out, "Write the JSON here instead of stdout");

  int seeds = 10;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Compare With-State and No-State runs over several seeds");
  add_config(sweep);
  sweep->add_option("--seeds", seeds, "Number of seeds, starting at the config seed")->check(CLI::PositiveNumber);
  sweep->add_option("-j,--jobs", jobs, "Worker processes")->check(CLI::PositiveNumber);
  sweep->add_option("-o,--out", out, "Directory for per-episode output");

  std::string command, url;
  int timeout = 600;
  auto* check = app.add_subcommand("protocol-check", "Run the wire-protocol conformance suite against a worker");
  check->add_option("--command", command, "Worker command speaking NDJSON on stdio");
  check->add_option("--url", url, "Worker HTTP endpoint");
  check->add_option("--timeout", timeout, "HTTP timeout in seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (*seed_opt) overrides.push_back("seed=" + std::to_string(seed));
      return cmd_run(config_path, overrides, out);
    }
    if (*replay) return cmd_replay(dir, use_transcript);
    if (*analyze) return cmd_analyze(dir, validation, out);
    if (*discover) return cmd_discover(config_path, overrides, dataset_path, predictions_path, out);
    if (*dump) return cmd_forest_dump(dir, iteration, json_out);
    if (*sweep) return cmd_sweep(config_path, overrides, seeds, jobs, out);
    if (*check) return cmd_protocol_check(command, url, timeout);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
