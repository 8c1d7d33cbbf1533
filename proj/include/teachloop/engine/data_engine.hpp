#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "teachloop/core/types.hpp"
#include "teachloop/forest/skill_forest.hpp"
#include "teachloop/llm/provider.hpp"

namespace teachloop::engine {

struct DroppedSpec {
  std::size_t index = 0;
  std::string spec_digest;
  std::string reason;
};

struct EngineResult {
  std::vector<TrainingDatum> datums;  // in spec order, failed renders omitted
  std::size_t requested = 0;
  std::vector<DroppedSpec> dropped;
};

/// Turns an image description into a media reference.
class ImagePort {
 public:
  virtual ~ImagePort() = default;
  /// Throws Error(kRenderFailure) when no image can be produced.
  virtual std::string synthesize(const std::string& description) = 0;
};

/// Content-addressed stand-in for a text-to-image model.
class StubImagePort : public ImagePort {
 public:
  std::string synthesize(const std::string& description) override;
};

class DataEngine {
 public:
  explicit DataEngine(std::size_t max_in_flight = 4) : max_in_flight_(max_in_flight) {}
  virtual ~DataEngine() = default;

  /// One datum per spec, in order. Failed renders are dropped and reported;
  /// more than half failing raises Error(kEngineDegraded).
  EngineResult execute_plan(const std::vector<DataSpec>& specs, int iteration);

  /// Renders the outstanding quota of every subskill.
  EngineResult execute_forest(const forest::SkillForest& forest, const forest::ProducedCounts& produced,
                              DomainId domain, int iteration);

  /// Renders a single spec; throws on failure.
  virtual TrainingDatum render(const DataSpec& spec, int iteration) = 0;

 private:
  std::size_t max_in_flight_;
};

/// Specs for one quota entry, numbered after the `already_produced` datums.
std::vector<DataSpec> specs_for_quota(const forest::QuotaEntry& entry, DomainId domain,
                                      std::int64_t already_produced);

/// Provider-free renderer for the simulated domain; a pure function of
/// (spec, seed). Responses embed the target skill and subskill.
class SimulatedEngine : public DataEngine {
 public:
  explicit SimulatedEngine(std::uint64_t seed = 0) : DataEngine(1), seed_(seed) {}
  TrainingDatum render(const DataSpec& spec, int iteration) override;

 private:
  std::uint64_t seed_;
};

/// Renders math, VQA and code datums through the provider port. Simulated
/// specs fall through to the SimulatedEngine rule.
class LlmEngine : public DataEngine {
 public:
  LlmEngine(const llm::LlmClient& client, std::shared_ptr<ImagePort> images, std::uint64_t seed = 0);

  TrainingDatum render(const DataSpec& spec, int iteration) override;

  TrainingDatum render_math_datum(const DataSpec& spec, int iteration) const;
  TrainingDatum render_vqa_datum(const DataSpec& spec, int iteration) const;
  TrainingDatum render_code_datum(const DataSpec& spec, int iteration) const;

 private:
  const llm::LlmClient& client_;
  std::shared_ptr<ImagePort> images_;
  SimulatedEngine simulated_;
};

}  // namespace teachloop::engine
