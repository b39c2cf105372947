#pragma once

#include "metasac/config.hpp"
#include "metasac/networks.hpp"

#include <functional>
#include <string>
#include <vector>

namespace metasac {

inline constexpr const char* kCsvHeader =
    "step,eval_return_mean,eval_return_std,log_alpha,q_loss,pi_loss,traj_entropy_rate,state_entropy";

struct LogRow {
  long step = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double log_alpha = 0.0;
  double q_loss = 0.0;   // NaN before the first update
  double pi_loss = 0.0;  // NaN before the first update
  double traj_entropy_rate = 0.0;
  double state_entropy = 0.0;

  bool operator==(const LogRow& o) const;  // NaN compares equal to NaN
};

struct RunLog {
  std::vector<LogRow> rows;
};

/// Hooks for tests and tools; all optional.
struct TrainObserver {
  /// Called after each temperature update with the log-alpha gradient actually applied.
  std::function<void(long step, double applied_grad, double log_alpha)> on_alpha_update;
  /// Called once per update cycle.
  std::function<void(long step)> on_update;
  /// Called after every evaluation row is appended.
  std::function<void(const LogRow&)> on_eval;
};

struct TrainResult {
  RunLog log;
  nn::PolicyParams policy;
  double initial_log_alpha = 0.0;
  double final_log_alpha = 0.0;
  long updates = 0;
};

/// Runs one experiment. Evaluations happen at step 0 and after every
/// eval_interval environment steps; one update cycle follows every environment
/// step past start_steps.
TrainResult train(const RunConfig& config, const TrainObserver& observer = {});

/// CSV with kCsvHeader and %.17g values.
std::string format_csv(const RunLog& log);
void write_csv(const RunLog& log, const std::string& path);
RunLog parse_csv(const std::string& text);
RunLog read_csv(const std::string& path);

/// Minimal standalone SVG line chart of mean evaluation return against step.
void write_svg(const std::vector<std::pair<std::string, RunLog>>& series, const std::string& path);

}  // namespace metasac
