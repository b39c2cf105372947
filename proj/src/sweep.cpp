#include "metasac/sweep.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace metasac {

namespace fs = std::filesystem;

double final_window_mean(const RunLog& log, int window) {
  if (log.rows.empty()) throw std::invalid_argument("final_window_mean: empty log");
  if (window < 1) throw std::invalid_argument("final_window_mean: window must be positive");
  const std::size_t n = std::min(log.rows.size(), static_cast<std::size_t>(window));
  double s = 0.0;
  for (std::size_t i = log.rows.size() - n; i < log.rows.size(); ++i) s += log.rows[i].eval_return_mean;
  return s / static_cast<double>(n);
}

std::vector<SweepEntry> expand_grid(const RunConfig& base,
                                    const std::vector<std::pair<std::string, std::vector<std::string>>>& axes,
                                    const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  std::vector<SweepEntry> settings{{"", base}};
  for (const auto& [key, values] : axes) {
    if (values.empty()) throw std::invalid_argument("sweep axis '" + key + "' has no values");
    std::vector<SweepEntry> next;
    for (const SweepEntry& e : settings) {
      for (const std::string& v : values) {
        SweepEntry n = e;
        n.config.apply_setting(key, v);
        n.setting += (n.setting.empty() ? "" : ";") + key + "=" + v;
        next.push_back(std::move(n));
      }
    }
    settings = std::move(next);
  }
  std::vector<SweepEntry> out;
  for (const SweepEntry& e : settings) {
    for (std::uint64_t seed : seeds) {
      SweepEntry n = e;
      n.config.seed = seed;
      if (n.setting.empty()) n.setting = n.config.algo;
      out.push_back(std::move(n));
    }
  }
  return out;
}

namespace {

std::string file_stem(const std::string& setting, std::uint64_t seed) {
  std::string s = setting;
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  }
  return s + "_seed" + std::to_string(seed);
}

[[noreturn]] void run_child(const RunConfig& config, const std::string& err_path) {
  int code = 0;
  try {
    train(config);
  } catch (const std::exception& e) {
    std::ofstream(err_path) << e.what() << "\n";
    code = 1;
  }
  std::fflush(nullptr);
  _exit(code);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

const SweepSummary& SweepResult::at(const std::string& setting) const {
  for (const SweepSummary& s : summary)
    if (s.setting == setting) return s;
  throw std::out_of_range("no sweep setting '" + setting + "'");
}

int SweepResult::failures() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const SweepRun& r) { return !r.ok; }));
}

SweepResult sweep(const std::vector<SweepEntry>& entries, const SweepOptions& options) {
  if (entries.empty()) throw std::invalid_argument("sweep needs at least one config");
  if (options.jobs < 1) throw std::invalid_argument("sweep needs at least one job slot");
  for (const SweepEntry& e : entries) e.config.validate();
  fs::create_directories(options.out_dir);

  SweepResult result;
  std::vector<std::string> err_paths;
  std::vector<RunConfig> configs;
  for (const SweepEntry& e : entries) {
    const std::string stem = (fs::path(options.out_dir) / file_stem(e.setting, e.config.seed)).string();
    SweepRun run;
    run.setting = e.setting;
    run.seed = e.config.seed;
    run.csv_path = stem + ".csv";
    result.runs.push_back(run);
    err_paths.push_back(stem + ".err");
    RunConfig c = e.config;
    c.out = run.csv_path;
    c.svg.clear();
    c.save_policy.clear();
    configs.push_back(std::move(c));
    fs::remove(err_paths.back());
  }

  std::map<pid_t, std::size_t> running;
  std::vector<int> status(entries.size(), -1);
  auto reap_one = [&] {
    int st = 0;
    const pid_t pid = ::waitpid(-1, &st, 0);
    if (pid < 0) throw std::runtime_error("waitpid failed");
    auto it = running.find(pid);
    if (it == running.end()) return;
    status[it->second] = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + (WIFSIGNALED(st) ? WTERMSIG(st) : 0);
    running.erase(it);
  };
  for (std::size_t i = 0; i < configs.size(); ++i) {
    while (static_cast<int>(running.size()) >= options.jobs) reap_one();
    std::fflush(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) run_child(configs[i], err_paths[i]);
    running[pid] = i;
  }
  while (!running.empty()) reap_one();

  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    SweepRun& run = result.runs[i];
    if (status[i] != 0) {
      run.error = fs::exists(err_paths[i]) ? slurp(err_paths[i]) : "child exited with status " + std::to_string(status[i]);
      continue;
    }
    try {
      run.log = read_csv(run.csv_path);
      run.final_mean = final_window_mean(run.log, options.window);
      run.ok = true;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  }
  result.summary = summarize(result.runs);
  write_summary_csv(result.summary, (fs::path(options.out_dir) / "summary.csv").string());
  return result;
}

std::vector<SweepSummary> summarize(const std::vector<SweepRun>& runs) {
  std::vector<SweepSummary> out;
  std::map<std::string, std::vector<const SweepRun*>> groups;
  for (const SweepRun& r : runs) {
    if (!groups.count(r.setting)) out.push_back({r.setting});
    groups[r.setting].push_back(&r);
  }
  for (SweepSummary& s : out) {
    std::vector<double> finals, a0, a1;
    for (const SweepRun* r : groups[s.setting]) {
      if (!r->ok) {
        ++s.failures;
        continue;
      }
      finals.push_back(r->final_mean);
      if (!r->log.rows.empty()) {
        a0.push_back(r->log.rows.front().log_alpha);
        a1.push_back(r->log.rows.back().log_alpha);
      }
    }
    s.seeds = static_cast<int>(finals.size());
    auto mean = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      return v.empty() ? NAN : m / static_cast<double>(v.size());
    };
    s.final_mean = mean(finals);
    double ss = 0.0;
    for (double x : finals) ss += (x - s.final_mean) * (x - s.final_mean);
    s.final_half_std = finals.empty() ? NAN : 0.5 * std::sqrt(ss / static_cast<double>(finals.size()));
    s.initial_log_alpha = mean(a0);
    s.final_log_alpha = mean(a1);
  }
  return out;
}

void write_summary_csv(const std::vector<SweepSummary>& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "setting,seeds,failures,final_mean,final_half_std,initial_log_alpha,final_log_alpha\n";
  char buf[200];
  for (const SweepSummary& s : summary) {
    std::snprintf(buf, sizeof buf, ",%d,%d,%.17g,%.17g,%.17g,%.17g\n", s.seeds, s.failures, s.final_mean,
                  s.final_half_std, s.initial_log_alpha, s.final_log_alpha);
    out << '"' << s.setting << '"' << buf;
  }
}

}  // namespace metasac
