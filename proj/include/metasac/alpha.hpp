#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace metasac::alpha {

enum class Tuner { Fixed, Dual, Meta };

Tuner parse_tuner(const std::string& name);  // "fixed" | "dual" | "meta"
std::string to_string(Tuner t);

/// Trained temperature, represented as log alpha and kept <= clip_max.
struct AlphaState {
  double log_alpha = 0.0;
  double clip_max = 0.0;         // alpha <= 1
  double grad_clip = 0.05;       // on |d/dlog_alpha|; <= 0 disables
  double lr = 3e-4;
  double target_entropy = -1.0;  // dual tuner only
  double last_grad = 0.0;        // most recent gradient actually applied

  // Optional Adam on the scalar; plain gradient descent when disengaged.
  struct Adam {
    double m = 0.0, v = 0.0;
    long steps = 0;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  };
  std::optional<Adam> adam;

  double alpha() const;
};

AlphaState make_alpha_state(double initial_alpha, double lr = 3e-4, bool use_adam = false);

/// Constant or exponentially decaying temperature, alpha(t) = alpha0 exp(-kappa t).
struct FixedSchedule {
  double alpha0 = 0.2;
  double kappa = 0.0;

  double at(long step) const;
  void validate() const;

  /// Decay from alpha_start at t = 0 to alpha_end at t = final_step.
  static FixedSchedule decaying(double alpha_start, double alpha_end, long final_step);
};

/// Dual descent on L(alpha) = E[-alpha log pi - alpha H] in log space:
/// g = alpha * (mean(-log pi) - H), step, clip to <= clip_max. The 0.05 clip is
/// a metagradient convention and is not applied here.
void dual_update(AlphaState& state, const Eigen::MatrixXd& log_probs);

/// Metagradient step given dL_meta/dalpha: g = alpha * grad_alpha, |g| clipped
/// to grad_clip, step, clip log alpha.
void meta_update(AlphaState& state, double grad_alpha);

/// Shared tail of both updates. Exposed for tests.
void apply_log_alpha_gradient(AlphaState& state, double g);

}  // namespace metasac::alpha
