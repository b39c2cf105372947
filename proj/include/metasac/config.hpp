#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace metasac {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every knob of a training run. Keys accepted by apply_setting are the field
/// names below; CLI flags use the same names with '-' for '_'.
struct RunConfig {
  std::string env = "pointmass";
  std::string algo = "sac-v1";  // sac-v1 | sac-v2 | meta-sac
  std::uint64_t seed = 0;
  long steps = 30000;
  long start_steps = 1000;
  long eval_interval = 1000;
  int eval_rollouts = 10;

  int hidden = 256;
  int hidden_layers = 2;
  bool twin_q = true;

  int batch = 256;
  double gamma = 0.99;
  double tau = 0.05;
  double lr_q = 3e-4;
  double lr_pi = 3e-4;
  double lr_alpha = 3e-4;
  std::string policy_optimizer = "auto";  // auto: rmsprop for meta-sac, adam otherwise
  std::string critic_optimizer = "adam";
  double rho = 0.99;
  long capacity = 1000000;

  double alpha = 0.2;        // fixed value, or the initial value for the trained tuners
  double alpha_decay = 0.0;  // kappa of alpha0 exp(-kappa t), fixed tuner only
  double alpha_end = 0.0;    // > 0: decay from alpha to alpha_end over the run instead
  bool alpha_adam = false;
  double alpha_grad_clip = 0.05;
  double target_entropy = 0.0;
  bool target_entropy_set = false;  // otherwise -action_dim

  std::string meta_states = "initial";  // initial | arbitrary
  std::string meta_q = "soft";          // soft | classic
  bool resample = true;
  std::string meta_order = "alpha-first";  // alpha-first | alg1
  long d0_size = 256;

  bool warmup_policy = false;
  std::string entropy_mode = "mc";  // gaussian | mc
  int knn_k = 3;

  std::string out;  // CSV path; empty means none
  std::string svg;  // optional chart path
  std::string save_policy;  // optional checkpoint path, written at the end

  /// Parses and assigns one setting; throws ConfigError on unknown keys or bad values.
  void apply_setting(const std::string& key, const std::string& value);
  /// Flat "key = value" lines; '#' starts a comment.
  void apply_file(const std::string& path);
  void apply_text(const std::string& text, const std::string& origin = "<text>");

  /// Cross-field checks, run before any work.
  void validate() const;

  /// Canonical key=value dump (round-trips through apply_text).
  std::string to_text() const;
};

}  // namespace metasac
