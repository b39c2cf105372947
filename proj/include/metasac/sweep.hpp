#pragma once

#include "metasac/config.hpp"
#include "metasac/harness.hpp"

#include <string>
#include <utility>
#include <vector>

namespace metasac {

/// Smoothing window for final performance, in evaluations.
inline constexpr int kFinalWindow = 20;

/// Mean of eval_return_mean over the last `window` rows (all rows if fewer).
double final_window_mean(const RunLog& log, int window = kFinalWindow);

struct SweepEntry {
  std::string setting;  // rows with the same setting are aggregated over seeds
  RunConfig config;
};

/// Cartesian product of `axes` (key, values) over `seeds`, on top of `base`.
std::vector<SweepEntry> expand_grid(const RunConfig& base,
                                    const std::vector<std::pair<std::string, std::vector<std::string>>>& axes,
                                    const std::vector<std::uint64_t>& seeds);

struct SweepRun {
  std::string setting;
  std::uint64_t seed = 0;
  std::string csv_path;
  bool ok = false;
  std::string error;
  RunLog log;
  double final_mean = 0.0;
};

struct SweepSummary {
  std::string setting;
  int seeds = 0;
  int failures = 0;
  double final_mean = 0.0;      // across seeds
  double final_half_std = 0.0;  // half the population std across seeds
  double initial_log_alpha = 0.0;  // mean across seeds
  double final_log_alpha = 0.0;    // mean across seeds
};

struct SweepOptions {
  std::string out_dir = "sweep";
  int jobs = 1;
  int window = kFinalWindow;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepSummary> summary;  // in order of first appearance

  const SweepSummary& at(const std::string& setting) const;
  int failures() const;
};

/// Runs each entry in its own child process (at most `jobs` at once), then
/// aggregates. A failed child is reported with its error; the other runs are kept.
SweepResult sweep(const std::vector<SweepEntry>& entries, const SweepOptions& options);

std::vector<SweepSummary> summarize(const std::vector<SweepRun>& runs);
void write_summary_csv(const std::vector<SweepSummary>& summary, const std::string& path);

}  // namespace metasac
