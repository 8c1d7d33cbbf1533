#include "teachloop/runner/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "teachloop/core/error.hpp"

namespace teachloop::runner {
namespace {

const std::map<std::string, Score>& skill_scores(const PerformanceReport& report) {
  return report.per_true_skill.empty() ? report.per_skill : report.per_true_skill;
}

Score lookup(const std::map<std::string, Score>& scores, const std::string& key) {
  auto it = scores.find(key);
  return it == scores.end() ? Score{} : it->second;
}

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::string pad(const std::string& text, std::size_t width) {
  return text.size() >= width ? text : text + std::string(width - text.size(), ' ');
}

std::string render_summary(const Analysis& a) {
  std::ostringstream out;
  out << "before: iteration " << a.before_iteration << ", after: iteration " << a.after_iteration << "\n\n";
  std::size_t width = 8;
  for (const auto& row : a.skills) width = std::max(width, row.skill.size() + 2);
  out << pad("skill", width) << pad("before", 9) << pad("after", 9) << "delta\n";
  for (const auto& row : a.skills) {
    out << pad(row.skill, width) << pad(format_percent(row.before_bp), 9) << pad(format_percent(row.after_bp), 9)
        << format_delta(row.delta_bp) << "\n";
  }
  out << "\ngain by difficulty bin\n";
  for (const auto& row : a.difficulty) {
    out << "  " << row.bin << "  " << format_delta(row.gain_bp) << "  (" << row.after.total << " items)\n";
  }
  out << "\ngain by rarity\n";
  for (const auto& row : a.rarity) {
    out << "  " << pad(row.skill, width) << "rarity " << fixed(row.rarity, 3) << "  " << format_delta(row.gain_bp)
        << "\n";
  }
  out << "\nvalidation accuracy by iteration\n";
  for (const auto& p : a.validation) out << "  " << p.iteration << "  " << fixed(100.0 * p.accuracy, 2) << "\n";
  if (!a.forward.empty()) {
    out << "\nforward accuracy on generated data\n";
    for (const auto& p : a.forward) out << "  " << p.iteration << "  " << fixed(100.0 * p.accuracy, 2) << "\n";
  }
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::int64_t basis_points(const Score& score) {
  if (score.total <= 0) return 0;
  return (score.correct * 20000 + score.total) / (2 * score.total);
}

std::string format_percent(std::int64_t bp) {
  const char* sign = bp < 0 ? "-" : "";
  const std::int64_t a = bp < 0 ? -bp : bp;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", sign, static_cast<long long>(a / 100),
                static_cast<long long>(a % 100));
  return buf;
}

std::string format_delta(std::int64_t bp) {
  return (bp < 0 ? "-" : "+") + format_percent(bp < 0 ? -bp : bp);
}

Analysis analyze(const std::vector<TrajectoryRecord>& trajectory, const Dataset* validation) {
  Analysis a;
  if (trajectory.empty()) {
    a.summary = "empty trajectory\n";
    return a;
  }
  const auto candidates = candidate_records(trajectory);
  std::vector<double> accuracies;
  for (const auto* r : candidates) accuracies.push_back(r->reward);
  const TrajectoryRecord& before = trajectory.front();
  const TrajectoryRecord& after = candidates.empty() ? before : *candidates[*select_best(accuracies)];
  a.before_iteration = before.iteration;
  a.after_iteration = after.iteration;

  auto skill_row = [](std::string name, Score b, Score f) {
    SkillRow row{std::move(name), b, f, basis_points(b), basis_points(f), 0};
    row.delta_bp = row.after_bp - row.before_bp;
    return row;
  };
  a.skills.push_back(skill_row("overall", before.report.overall, after.report.overall));
  std::map<std::string, bool> names;
  for (const auto& [name, _] : skill_scores(before.report)) names[name] = true;
  for (const auto& [name, _] : skill_scores(after.report)) names[name] = true;
  for (const auto& [name, _] : names) {
    a.skills.push_back(skill_row(name, lookup(skill_scores(before.report), name),
                                 lookup(skill_scores(after.report), name)));
  }

  for (int bin = 1; bin <= 5; ++bin) {
    const auto key = std::to_string(bin);
    const Score b = lookup(before.report.per_difficulty_bin, key);
    const Score f = lookup(after.report.per_difficulty_bin, key);
    if (b.total == 0 && f.total == 0) continue;
    a.difficulty.push_back({bin, b, f, basis_points(f) - basis_points(b)});
  }

  std::map<std::string, std::int64_t> counts;
  std::int64_t total = 0;
  if (validation) {
    for (const auto& item : validation->items) {
      if (!item.true_skill) continue;
      ++counts[*item.true_skill];
      ++total;
    }
  }
  if (total == 0) {
    counts.clear();
    for (const auto& [name, score] : skill_scores(before.report)) {
      counts[name] = score.total;
      total += score.total;
    }
  }
  for (const auto& row : a.skills) {
    if (row.skill == "overall" || !counts.count(row.skill) || total == 0) continue;
    const double share = static_cast<double>(counts[row.skill]) / static_cast<double>(total);
    a.rarity.push_back({row.skill, share, 1.0 - share, row.delta_bp});
  }
  std::stable_sort(a.rarity.begin(), a.rarity.end(),
                   [](const RarityRow& x, const RarityRow& y) { return x.rarity < y.rarity; });

  for (const auto& r : trajectory) {
    if (r.iteration == 0 || r.trained) a.validation.push_back({r.iteration, r.reward});
    if (r.forward_accuracy) a.forward.push_back({r.iteration, *r.forward_accuracy});
  }
  a.summary = render_summary(a);
  return a;
}

void write_analysis(const Analysis& a, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream skills;
  skills << "skill,before_correct,before_total,after_correct,after_total,before,after,delta\n";
  for (const auto& r : a.skills) {
    skills << r.skill << "," << r.before.correct << "," << r.before.total << "," << r.after.correct << ","
           << r.after.total << "," << format_percent(r.before_bp) << "," << format_percent(r.after_bp) << ","
           << format_delta(r.delta_bp) << "\n";
  }
  write_file(dir / "skills.csv", skills.str());

  std::ostringstream difficulty;
  difficulty << "bin,before,after,items,gain\n";
  for (const auto& r : a.difficulty) {
    difficulty << r.bin << "," << format_percent(basis_points(r.before)) << ","
               << format_percent(basis_points(r.after)) << "," << r.after.total << "," << format_delta(r.gain_bp)
               << "\n";
  }
  write_file(dir / "difficulty.csv", difficulty.str());

  std::ostringstream rarity;
  rarity << "skill,share,rarity,gain\n";
  for (const auto& r : a.rarity) {
    rarity << r.skill << "," << fixed(r.share, 4) << "," << fixed(r.rarity, 4) << "," << format_delta(r.gain_bp)
           << "\n";
  }
  write_file(dir / "rarity.csv", rarity.str());

  auto series = [](const std::vector<SeriesPoint>& points) {
    std::ostringstream out;
    out << "iteration,accuracy\n";
    for (const auto& p : points) out << p.iteration << "," << fixed(p.accuracy, 6) << "\n";
    return out.str();
  };
  write_file(dir / "validation_series.csv", series(a.validation));
  write_file(dir / "forward_series.csv", series(a.forward));
  write_file(dir / "summary.txt", a.summary);
}

}  // namespace teachloop::runner
