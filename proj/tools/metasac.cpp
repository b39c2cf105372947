// metasac: train, sweep, gradcheck and metrics front end.

#include "metasac/checkpoint.hpp"
#include "metasac/config.hpp"
#include "metasac/envs.hpp"
#include "metasac/gradcheck.hpp"
#include "metasac/harness.hpp"
#include "metasac/metrics.hpp"
#include "metasac/sac.hpp"
#include "metasac/sweep.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace metasac;

namespace {

// Flags shared by train and sweep. Values are kept as text and routed through
// RunConfig::apply_setting so the config file and the command line parse alike.
struct RunFlags {
  std::string config_file;
  std::vector<std::pair<std::string, std::optional<std::string>>> flags;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "flat key = value config file")->check(CLI::ExistingFile);
    static const char* names[][2] = {
        {"env", "pointmass | pendulum"},
        {"algo", "sac-v1 | sac-v2 | meta-sac"},
        {"seed", "root seed"},
        {"steps", "total environment steps"},
        {"start-steps", "steps before the first update"},
        {"eval-interval", "environment steps between evaluations"},
        {"eval-rollouts", "episodes per evaluation"},
        {"hidden", "hidden layer width"},
        {"alpha", "fixed temperature, or the initial one for sac-v2 / meta-sac"},
        {"alpha-decay", "fixed tuner: alpha0 * exp(-kappa t)"},
        {"alpha-end", "fixed tuner: decay to this value by the last step"},
        {"target-entropy", "sac-v2 target entropy (default -dim(a))"},
        {"meta-states", "initial | arbitrary"},
        {"meta-q", "soft | classic"},
        {"resample", "on | off"},
        {"meta-order", "alpha-first | alg1"},
        {"tau", "Polyak coefficient"},
        {"gamma", "discount"},
        {"batch", "minibatch size"},
        {"out", "CSV output path"},
        {"svg", "optional SVG chart path"},
    };
    flags.reserve(std::size(names));
    for (const auto& n : names) {
      flags.emplace_back(n[0], std::nullopt);
      app->add_option("--" + std::string(n[0]), flags.back().second, n[1]);
    }
    app->add_option("--set", sets, "any other setting as key=value (repeatable)");
  }

  RunConfig build() const {
    RunConfig c;
    if (!config_file.empty()) c.apply_file(config_file);
    for (const auto& [key, value] : flags)
      if (value) c.apply_setting(key, *value);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.apply_setting(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return c;
  }
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

Eigen::MatrixXd read_states(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof()) throw std::runtime_error("non-numeric entry in " + path);
    if (!rows.empty() && row.size() != rows.front().size()) throw std::runtime_error("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + " holds no states");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_states(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft actor-critic with fixed, dual-descent and metagradient temperature tuning"};
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "run one training experiment");
  train_flags.attach(train_cmd);
  bool print_config = false;
  train_cmd->add_flag("--print-config", print_config, "print the resolved config and exit");

  RunFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a seed x setting grid and summarize");
  sweep_flags.attach(sweep_cmd);
  std::vector<std::string> grid;
  int n_seeds = 5;
  std::string sweep_dir = "sweep";
  int jobs = 1;
  int window = kFinalWindow;
  sweep_cmd->add_option("--grid", grid, "axis as key=v1,v2,... (repeatable)");
  sweep_cmd->add_option("--seeds", n_seeds, "run N seeds starting at --seed")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--dir", sweep_dir, "output directory for per-run CSVs and summary.csv");
  sweep_cmd->add_option("--jobs", jobs, "concurrent child processes")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--window", window, "final-window length in evaluations")->check(CLI::PositiveNumber);

  auto* grad_cmd = app.add_subcommand("gradcheck", "metagradient vs finite differences on random small networks");
  int instances = 50;
  std::uint64_t grad_seed = 0;
  double grad_h = 1e-4, grad_tol = 1e-4;
  grad_cmd->add_option("--instances", instances, "number of random instances")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_seed, "instance generator seed");
  grad_cmd->add_option("--step", grad_h, "finite-difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tol", grad_tol, "largest accepted relative error")->check(CLI::PositiveNumber);

  auto* metrics_cmd = app.add_subcommand("metrics", "entropy estimators over a rollout file or a saved policy");
  std::string states_file, policy_file, metrics_env = "pointmass", save_states, mode = "mc";
  int k = 3, rollouts = 10;
  std::uint64_t metrics_seed = 0;
  metrics_cmd->add_option("--states", states_file, "rollout file: one state per line, comma or space separated");
  metrics_cmd->add_option("--policy", policy_file, "policy checkpoint; rolls out when --states is absent");
  metrics_cmd->add_option("--env", metrics_env, "environment for generated rollouts");
  metrics_cmd->add_option("--rollouts", rollouts, "episodes to roll out")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--seed", metrics_seed, "rollout seed");
  metrics_cmd->add_option("--k", k, "neighbour index for the k-NN estimator")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--mode", mode, "gaussian | mc");
  metrics_cmd->add_option("--save-states", save_states, "write the generated rollout states here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      RunConfig c = train_flags.build();
      c.validate();
      if (print_config) {
        std::cout << c.to_text();
        return 0;
      }
      TrainResult r = train(c);
      const LogRow& last = r.log.rows.back();
      std::printf("%s %s seed %llu: %ld updates, final eval return %.6g, log_alpha %.6g -> %.6g\n", c.algo.c_str(),
                  c.env.c_str(), static_cast<unsigned long long>(c.seed), r.updates, last.eval_return_mean,
                  r.initial_log_alpha, r.final_log_alpha);
      return 0;
    }
    if (*sweep_cmd) {
      RunConfig base = sweep_flags.build();
      std::vector<std::pair<std::string, std::vector<std::string>>> axes;
      for (const std::string& g : grid) {
        const auto eq = g.find('=');
        if (eq == std::string::npos) throw ConfigError("--grid expects key=v1,v2,..., got '" + g + "'");
        axes.emplace_back(g.substr(0, eq), split(g.substr(eq + 1), ','));
      }
      std::vector<std::uint64_t> seeds;
      for (int s = 0; s < n_seeds; ++s) seeds.push_back(base.seed + static_cast<std::uint64_t>(s));
      SweepResult res = sweep(expand_grid(base, axes, seeds), {sweep_dir, jobs, window});
      std::printf("%-40s %5s %12s %12s %10s\n", "setting", "seeds", "final_mean", "half_std", "log_alpha");
      for (const SweepSummary& s : res.summary) {
        std::printf("%-40s %5d %12.6g %12.6g %10.4g\n", s.setting.c_str(), s.seeds, s.final_mean, s.final_half_std,
                    s.final_log_alpha);
      }
      for (const SweepRun& r : res.runs) {
        if (!r.ok) std::fprintf(stderr, "failed: %s seed %llu: %s\n", r.setting.c_str(),
                                static_cast<unsigned long long>(r.seed), r.error.c_str());
      }
      return res.failures() == 0 ? 0 : 1;
    }
    if (*grad_cmd) {
      double worst = 0.0;
      for (const auto& c : meta::gradcheck_cases(instances, grad_seed)) {
        const meta::GradcheckOutcome o = meta::check_metagradient(c, grad_h);
        worst = std::max(worst, o.rel_error);
        std::printf("width %2d batch %2d alpha %.5f  analytic % .10e  fd % .10e  rel %.2e\n", c.width, c.batch,
                    c.alpha, o.analytic, o.oracle, o.rel_error);
      }
      std::printf("max relative error %.3e (tolerance %.1e)\n", worst, grad_tol);
      return worst <= grad_tol ? 0 : 1;
    }
    if (*metrics_cmd) {
      std::optional<nn::PolicyParams> policy;
      if (!policy_file.empty()) policy = nn::load_policy(policy_file);
      Eigen::MatrixXd states;
      if (!states_file.empty()) {
        states = read_states(states_file);
      } else if (policy) {
        auto env = env::make_env(metrics_env);
        Rng rng = make_stream(metrics_seed, "eval");
        states = sac::evaluate(*policy, *env, rollouts, rng).visited;
        if (!save_states.empty()) write_states(states, save_states);
      } else {
        throw std::invalid_argument("metrics needs --states or --policy");
      }
      std::printf("states %lld dim %lld\n", static_cast<long long>(states.rows()), static_cast<long long>(states.cols()));
      std::printf("state_entropy (k=%d) %.10g\n", k, metrics::knn_entropy(states, k));
      if (policy) {
        Rng rng = make_stream(metrics_seed, "metrics");
        std::printf("traj_entropy_rate (%s) %.10g\n", mode.c_str(),
                    metrics::trajectory_entropy_rate(states, *policy, metrics::parse_entropy_mode(mode), rng));
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
