#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "teachloop/runner/episode.hpp"

namespace teachloop::runner {

/// Accuracy in hundredths of a percent, rounded half up.
std::int64_t basis_points(const Score& score);
/// 4418 -> "44.18".
std::string format_percent(std::int64_t bp);
/// 372 -> "+3.72", -50 -> "-0.50".
std::string format_delta(std::int64_t bp);

struct SkillRow {
  std::string skill;  // "overall" for the first row
  Score before;
  Score after;
  std::int64_t before_bp = 0;
  std::int64_t after_bp = 0;
  std::int64_t delta_bp = 0;
};

struct DifficultyRow {
  int bin = 0;
  Score before;
  Score after;
  std::int64_t gain_bp = 0;
};

struct RarityRow {
  std::string skill;
  double share = 0.0;   // fraction of validation items
  double rarity = 0.0;  // 1 - share
  std::int64_t gain_bp = 0;
};

struct SeriesPoint {
  int iteration = 0;
  double accuracy = 0.0;
};

struct Analysis {
  int before_iteration = 0;
  int after_iteration = 0;
  std::vector<SkillRow> skills;
  std::vector<DifficultyRow> difficulty;
  std::vector<RarityRow> rarity;  // most common skill first
  std::vector<SeriesPoint> validation;
  std::vector<SeriesPoint> forward;
  std::string summary;
};

/// Compares the initial evaluation with the best checkpoint's evaluation.
/// Skill rows use hidden-skill scores when the reports carry them, else
/// the assigned-skill scores. Skill shares come from `validation` when
/// given, else from the initial report's item counts.
Analysis analyze(const std::vector<TrajectoryRecord>& trajectory, const Dataset* validation = nullptr);

/// skills.csv, difficulty.csv, rarity.csv, validation_series.csv,
/// forward_series.csv and summary.txt.
void write_analysis(const Analysis& analysis, const std::filesystem::path& dir);

}  // namespace teachloop::runner
