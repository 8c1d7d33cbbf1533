#include "teachloop/runner/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "teachloop/core/error.hpp"

namespace teachloop::runner {
namespace {

[[noreturn]] void fail(const std::string& message) { throw Error(ErrorCode::kConfig, message); }

bool present(const YAML::Node& node) { return node.IsDefined() && !node.IsNull(); }

void check_keys(const YAML::Node& node, const std::string& where, std::set<std::string> allowed) {
  if (!present(node)) return;
  if (!node.IsMap()) fail("'" + where + "' must be a table");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (!present(node) || !node.IsMap() || !node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    fail(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

void set_path(YAML::Node node, const std::vector<std::string>& keys, std::size_t i, const YAML::Node& value) {
  if (i + 1 == keys.size()) {
    node[keys[i]] = value;
    return;
  }
  if (!node[keys[i]] || !node[keys[i]].IsMap()) node[keys[i]] = YAML::Node(YAML::NodeType::Map);
  set_path(node[keys[i]], keys, i + 1, value);
}

void apply_override(YAML::Node& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) fail("override '" + text + "' is not key=value");
  std::vector<std::string> keys;
  std::stringstream path(text.substr(0, eq));
  for (std::string key; std::getline(path, key, '.');) {
    if (key.empty()) fail("override '" + text + "' has an empty key");
    keys.push_back(key);
  }
  YAML::Node value;
  try {
    value = YAML::Load(text.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    fail("override '" + text + "': " + e.what());
  }
  set_path(root, keys, 0, value);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (max_iterations < 1) fail("max_iterations must be at least 1");
  if (saturation_patience < 1) fail("saturation_patience must be at least 1");
  effective_environment().validate();

  const bool tree = environment.variant == env::Variant::kSkillTree;
  if (policy.kind == "handcrafted" && !tree) fail("the handcrafted policy needs the skill-tree environment");
  if ((policy.kind == "open-ended" && environment.variant != env::Variant::kOpenEnded) ||
      (policy.kind == "skill-list" && environment.variant != env::Variant::kSkillList)) {
    fail("policy '" + policy.kind + "' does not match the " + std::string(env::to_string(environment.variant)) +
         " environment");
  }
  if (policy.kind != "handcrafted" && policy.kind != "open-ended" && policy.kind != "skill-list" &&
      policy.kind != "external") {
    fail("unknown policy kind '" + policy.kind + "'");
  }
  if (policy.kind == "external" && policy.command.empty()) fail("external policy needs a command");
  if (ablation.no_state && policy.kind == "external") fail("the no-state ablation needs a built-in policy");

  if (provider.kind != "mock" && provider.kind != "replay" && provider.kind != "live") {
    fail("unknown provider kind '" + provider.kind + "'");
  }
  if (provider.kind == "replay" && provider.transcript.empty()) fail("replay provider needs a transcript");
  if (provider.kind == "live" && (provider.live.base_url.empty() || provider.live.model.empty())) {
    fail("live provider needs base_url and model");
  }
  if (provider.confusion < 0.0 || provider.confusion > 1.0) fail("provider.confusion must lie in [0, 1]");

  if (student.kind == "simulated") {
    if (environment.domain != DomainId::kSimulated) fail("the simulated student needs the simulated domain");
    student.params.validate();
  } else if (student.kind == "external") {
    if (student.command.empty() == student.url.empty()) fail("external student needs exactly one of command or url");
  } else {
    fail("unknown student kind '" + student.kind + "'");
  }

  if (!data.simulated && data.validation.empty()) fail("data needs a simulated section or a validation path");
  if (data.simulated && (data.simulated->skills < 1 || data.simulated->subskills < 1 || data.simulated->items < 1 ||
                         data.simulated->test_items < 1 || data.simulated->train_items < 1)) {
    fail("simulated data sizes must be positive");
  }
  if (data.simulated && !data.simulated->weights.empty() &&
      data.simulated->weights.size() != static_cast<std::size_t>(data.simulated->skills)) {
    fail("simulated weights need one entry per skill");
  }
  if (data.simulated && environment.domain != DomainId::kSimulated) fail("simulated data needs the simulated domain");
}

env::EnvironmentConfig ExperimentConfig::effective_environment() const {
  auto e = environment;
  if (ablation.epoch_scaling) {
    e.data_fraction = ablation.data_fraction;
    e.epochs = ablation.epochs;
  }
  return e;
}

ExperimentConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides,
                              const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = yaml_text.empty() ? YAML::Node(YAML::NodeType::Map) : YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    fail(std::string("cannot parse config: ") + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) fail("config must be a table");
  for (const auto& o : overrides) apply_override(root, o);

  check_keys(root, "", {"name", "seed", "max_iterations", "saturation_patience", "environment", "data", "provider",
                        "student", "policy", "ablation"});
  ExperimentConfig c;
  read(root, "name", c.name);
  read(root, "seed", c.seed);
  read(root, "max_iterations", c.max_iterations);
  read(root, "saturation_patience", c.saturation_patience);

  const auto env_node = root["environment"];
  check_keys(env_node, "environment",
             {"variant", "domain", "data_budget", "caps", "user_skills", "max_categories"});
  std::string variant = "skill-tree";
  std::string domain = "simulated";
  read(env_node, "variant", variant);
  read(env_node, "domain", domain);
  c.environment.variant = env::parse_variant(variant);
  try {
    c.environment.domain = parse_domain(domain);
  } catch (const Error& e) {
    fail(e.what());
  }
  read(env_node, "data_budget", c.environment.data_budget);
  read(env_node, "max_categories", c.environment.max_categories);
  if (env_node && env_node["user_skills"]) {
    std::vector<std::string> skills;
    read(env_node, "user_skills", skills);
    c.environment.user_skills = skills;
  }
  const auto caps_node = env_node ? env_node["caps"] : YAML::Node();
  check_keys(caps_node, "environment.caps", {"per_action_cap", "per_subskill_cap", "max_subskills"});
  if (c.environment.variant == env::Variant::kSkillTree) {
    forest::ForestCaps caps;
    read(caps_node, "per_action_cap", caps.per_action_cap);
    read(caps_node, "per_subskill_cap", caps.per_subskill_cap);
    read(caps_node, "max_subskills", caps.max_subskills_per_tree);
    c.environment.caps = caps;
  } else if (present(caps_node)) {
    fail("environment.caps only applies to the skill-tree environment");
  }

  const auto data = root["data"];
  check_keys(data, "data", {"simulated", "validation", "test", "train"});
  read(data, "validation", c.data.validation);
  read(data, "test", c.data.test);
  read(data, "train", c.data.train);
  c.data.validation = resolve(c.data.validation, base_dir);
  c.data.test = resolve(c.data.test, base_dir);
  c.data.train = resolve(c.data.train, base_dir);
  if (data) {
    for (const char* key : {"validation", "test", "train"}) {
      if (data[key]) root["data"][key] = resolve(data[key].as<std::string>(), base_dir);
    }
  }
  const auto sim = data ? data["simulated"] : YAML::Node();
  check_keys(sim, "data.simulated", {"skills", "subskills", "items", "test_items", "train_items", "weights", "seed"});
  if (present(sim) || (c.data.validation.empty() && c.environment.domain == DomainId::kSimulated)) {
    SimulatedDataConfig s;
    read(sim, "skills", s.skills);
    read(sim, "subskills", s.subskills);
    read(sim, "items", s.items);
    read(sim, "test_items", s.test_items);
    read(sim, "train_items", s.train_items);
    read(sim, "weights", s.weights);
    if (sim && sim["seed"]) s.seed = sim["seed"].as<std::uint64_t>();
    c.data.simulated = s;
  }

  const auto provider = root["provider"];
  check_keys(provider, "provider", {"kind", "confusion", "malformed_attempts", "transcript", "base_url", "model",
                                    "api_key_env", "timeout_seconds", "temperature", "max_retries", "max_in_flight"});
  read(provider, "kind", c.provider.kind);
  read(provider, "confusion", c.provider.confusion);
  read(provider, "malformed_attempts", c.provider.malformed_attempts);
  read(provider, "transcript", c.provider.transcript);
  c.provider.transcript = resolve(c.provider.transcript, base_dir);
  if (provider && provider["transcript"]) root["provider"]["transcript"] = c.provider.transcript;
  read(provider, "base_url", c.provider.live.base_url);
  read(provider, "model", c.provider.live.model);
  read(provider, "api_key_env", c.provider.live.api_key_env);
  read(provider, "timeout_seconds", c.provider.live.timeout_seconds);
  read(provider, "temperature", c.provider.temperature);
  read(provider, "max_retries", c.provider.max_retries);
  read(provider, "max_in_flight", c.provider.max_in_flight);

  const auto student = root["student"];
  check_keys(student, "student", {"kind", "p0", "cap", "eta", "mu", "sigma", "rho", "k_sat", "p0_overrides",
                                  "cap_overrides", "command", "url", "timeout_seconds"});
  auto& p = c.student.params;
  read(student, "kind", c.student.kind);
  read(student, "p0", p.p0);
  read(student, "cap", p.cap);
  read(student, "eta", p.eta);
  read(student, "mu", p.mu);
  read(student, "sigma", p.sigma);
  read(student, "rho", p.rho);
  read(student, "k_sat", p.k_sat);
  read(student, "p0_overrides", p.p0_overrides);
  read(student, "cap_overrides", p.cap_overrides);
  read(student, "command", c.student.command);
  read(student, "url", c.student.url);
  read(student, "timeout_seconds", c.student.timeout_seconds);
  p.seed = c.seed;

  const auto policy = root["policy"];
  check_keys(policy, "policy", {"kind", "max_subskills", "per_subskill_cap", "per_action_cap", "k_new",
                                "start_with_explore", "error_sample_cap", "command"});
  read(policy, "kind", c.policy.kind);
  auto& h = c.policy.handcrafted;
  if (c.environment.caps) {
    h.max_subskills = c.environment.caps->max_subskills_per_tree;
    h.per_subskill_cap = c.environment.caps->per_subskill_cap;
    h.per_action_cap = c.environment.caps->per_action_cap;
  }
  read(policy, "max_subskills", h.max_subskills);
  read(policy, "per_subskill_cap", h.per_subskill_cap);
  read(policy, "per_action_cap", h.per_action_cap);
  read(policy, "k_new", h.k_new);
  read(policy, "start_with_explore", h.start_with_explore);
  read(policy, "error_sample_cap", c.policy.error_sample_cap);
  read(policy, "command", c.policy.command);
  if (!policy || !policy["kind"]) {
    c.policy.kind = c.environment.variant == env::Variant::kSkillTree ? "handcrafted"
                                                                     : std::string(env::to_string(c.environment.variant));
  }

  const auto ablation = root["ablation"];
  check_keys(ablation, "ablation", {"no_state", "no_state_samples", "epoch_scaling", "data_fraction", "epochs"});
  read(ablation, "no_state", c.ablation.no_state);
  read(ablation, "no_state_samples", c.ablation.no_state_samples);
  read(ablation, "epoch_scaling", c.ablation.epoch_scaling);
  read(ablation, "data_fraction", c.ablation.data_fraction);
  read(ablation, "epochs", c.ablation.epochs);

  YAML::Emitter out;
  out << root;
  c.yaml = std::string(out.c_str()) + "\n";
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides, std::filesystem::absolute(path).parent_path());
}

}  // namespace teachloop::runner
