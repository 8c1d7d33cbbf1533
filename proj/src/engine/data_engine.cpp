#include "teachloop/engine/data_engine.hpp"

#include "teachloop/core/digest.hpp"
#include "teachloop/core/error.hpp"
#include "teachloop/core/parallel.hpp"
#include "teachloop/core/serialize.hpp"

namespace teachloop::engine {
namespace {

Provenance provenance_for(const DataSpec& spec, int iteration) {
  return Provenance{iteration, spec.target_skill, spec.target_subskill, spec_digest(spec)};
}

llm::TemplateVars focus_vars(const DataSpec& spec) {
  return {{"instruction", spec.instruction},
          {"skill", spec.target_skill.value_or("")},
          {"subskill", spec.target_subskill.value_or("")}};
}

std::string domain_template(const std::string& module, DomainId domain) {
  return module + "/" + std::string(to_string(domain));
}

}  // namespace

std::string StubImagePort::synthesize(const std::string& description) {
  return content_handle(description);
}

EngineResult DataEngine::execute_plan(const std::vector<DataSpec>& specs, int iteration) {
  EngineResult result;
  result.requested = specs.size();
  if (specs.empty()) return result;
  for (const auto& spec : specs) {
    if (spec.domain != specs.front().domain) {
      throw Error(ErrorCode::kInvalidArgument, "a plan must target a single domain");
    }
  }

  std::vector<std::optional<TrainingDatum>> rendered(specs.size());
  std::vector<std::string> failures(specs.size());
  parallel_for_index(specs.size(), max_in_flight_, [&](std::size_t i) {
    try {
      rendered[i] = render(specs[i], iteration);
    } catch (const Error& e) {
      failures[i] = std::string(to_string(e.code())) + ": " + e.what();
    }
  });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (rendered[i]) {
      result.datums.push_back(std::move(*rendered[i]));
    } else {
      result.dropped.push_back({i, spec_digest(specs[i]), failures[i]});
    }
  }
  if (2 * result.dropped.size() > specs.size()) {
    throw Error(ErrorCode::kEngineDegraded,
                std::to_string(result.dropped.size()) + " of " + std::to_string(specs.size()) +
                    " specs failed to render; first failure: " + result.dropped.front().reason);
  }
  return result;
}

std::vector<DataSpec> specs_for_quota(const forest::QuotaEntry& entry, DomainId domain,
                                      std::int64_t already_produced) {
  std::vector<DataSpec> specs;
  specs.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, entry.count)));
  for (std::int64_t k = 0; k < entry.count; ++k) {
    DataSpec spec;
    spec.instruction = "Write practice item " + std::to_string(already_produced + k + 1) +
                       " for the subskill '" + entry.subskill + "' of '" + entry.skill + "'.";
    spec.target_skill = entry.skill;
    spec.target_subskill = entry.subskill;
    spec.domain = domain;
    specs.push_back(std::move(spec));
  }
  return specs;
}

EngineResult DataEngine::execute_forest(const forest::SkillForest& forest,
                                        const forest::ProducedCounts& produced, DomainId domain,
                                        int iteration) {
  std::vector<DataSpec> specs;
  for (const auto& entry : forest::materialize_quota(forest, produced)) {
    auto it = produced.find({entry.skill, entry.subskill});
    auto more = specs_for_quota(entry, domain, it == produced.end() ? 0 : it->second);
    specs.insert(specs.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return execute_plan(specs, iteration);
}

TrainingDatum SimulatedEngine::render(const DataSpec& spec, int iteration) {
  const std::string skill = spec.target_skill.value_or("untargeted");
  const std::string subskill = spec.target_subskill.value_or("any");
  const std::string tag = sha256_hex(std::to_string(seed_) + "|" + spec_digest(spec)).substr(0, 12);
  TrainingDatum datum;
  datum.instruction = spec.instruction + " [item " + tag + "]";
  datum.response = "Worked answer for " + skill + " / " + subskill + " [skill=" + skill +
                   "; subskill=" + subskill + "]";
  datum.provenance = provenance_for(spec, iteration);
  return datum;
}

LlmEngine::LlmEngine(const llm::LlmClient& client, std::shared_ptr<ImagePort> images, std::uint64_t seed)
    : DataEngine(client.max_in_flight()),
      client_(client),
      images_(images ? std::move(images) : std::make_shared<StubImagePort>()),
      simulated_(seed) {}

TrainingDatum LlmEngine::render(const DataSpec& spec, int iteration) {
  switch (spec.domain) {
    case DomainId::kMath:
      return render_math_datum(spec, iteration);
    case DomainId::kVqa:
      return render_vqa_datum(spec, iteration);
    case DomainId::kCode:
      return render_code_datum(spec, iteration);
    case DomainId::kSimulated:
      return simulated_.render(spec, iteration);
  }
  throw Error(ErrorCode::kNotSupported, "no renderer for domain");
}

TrainingDatum LlmEngine::render_math_datum(const DataSpec& spec, int iteration) const {
  llm::CompletionRequest r;
  r.template_id = domain_template("datum_math", spec.domain);
  r.schema_id = "math_datum";
  r.variables = focus_vars(spec);
  const auto out = client_.complete(r).payload;
  TrainingDatum datum;
  datum.instruction = out["question"].get<std::string>();
  datum.response = out["solution"].get<std::string>() + "\nFinal answer: " +
                   out["final_answer"].get<std::string>();
  datum.provenance = provenance_for(spec, iteration);
  return datum;
}

TrainingDatum LlmEngine::render_vqa_datum(const DataSpec& spec, int iteration) const {
  if (spec.domain != DomainId::kVqa) throw Error(ErrorCode::kInvalidArgument, "not a VQA spec");
  llm::CompletionRequest describe;
  describe.template_id = domain_template("vqa_description", spec.domain);
  describe.schema_id = "vqa_description";
  describe.variables = focus_vars(spec);
  const std::string description = client_.complete(describe).payload["description"].get<std::string>();

  TrainingDatum datum;
  try {
    datum.media_ref = images_->synthesize(description);
  } catch (const Error& e) {
    throw Error(ErrorCode::kRenderFailure, std::string("image synthesis failed: ") + e.what());
  }

  llm::CompletionRequest ask;
  ask.template_id = domain_template("vqa_questions", spec.domain);
  ask.schema_id = "vqa_questions";
  ask.variables = {{"description", description},
                   {"skill", spec.target_skill.value_or("")},
                   {"subskill", spec.target_subskill.value_or("")},
                   {"num_questions", "1"}};
  const auto question = client_.complete(ask).payload["questions"].at(0);
  datum.instruction = question["question"].get<std::string>();
  datum.response = question["answer"].get<std::string>();
  datum.provenance = provenance_for(spec, iteration);
  return datum;
}

TrainingDatum LlmEngine::render_code_datum(const DataSpec& spec, int iteration) const {
  if (spec.domain != DomainId::kCode) throw Error(ErrorCode::kInvalidArgument, "not a code spec");
  llm::CompletionRequest pose;
  pose.template_id = domain_template("code_problem", spec.domain);
  pose.schema_id = "code_problem";
  pose.variables = focus_vars(spec);
  const auto problem = client_.complete(pose).payload;

  llm::CompletionRequest solve;
  solve.template_id = domain_template("code_solution", spec.domain);
  solve.schema_id = "code_solution";
  solve.variables = {{"problem", problem["problem"].get<std::string>()},
                     {"starter_code", problem["starter_code"].get<std::string>()}};
  const auto solution = client_.complete(solve).payload;

  TrainingDatum datum;
  datum.instruction = problem["problem"].get<std::string>() + "\n\n" +
                      problem["starter_code"].get<std::string>();
  datum.response = solution["solution"].get<std::string>();
  datum.provenance = provenance_for(spec, iteration);
  return datum;
}

}  // namespace teachloop::engine
