#pragma once

#include "metasac/autodiff.hpp"
#include "metasac/random.hpp"

#include <string>

namespace metasac::nn {

using ad::DiffValue;
using ad::Matrix;
using ad::ParamSet;
using ad::TensorMap;

/// log-std of the policy head is clamped to this range before exponentiation.
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct PolicyLayout {
  int state_dim = 1;
  int action_dim = 1;
  int hidden_width = 256;
  int hidden_layers = 2;
  double action_bound = 1.0;

  bool operator==(const PolicyLayout&) const = default;
};

struct CriticLayout {
  int state_dim = 1;
  int action_dim = 1;
  int hidden_width = 256;
  int hidden_layers = 2;
  bool twin = true;

  bool operator==(const CriticLayout&) const = default;
};

/// Squashed-Gaussian actor. Parameter ids: "trunk.<i>.W/b", "mean.W/b", "log_std.W/b".
struct PolicyParams {
  PolicyLayout layout;
  TensorMap values;
};

/// One or two Q networks. Parameter ids: "q1.<i>.W/b" and "q2.<i>.W/b", where the
/// last index is the scalar output layer.
struct CriticParams {
  CriticLayout layout;
  TensorMap values;
};

/// Weights and biases uniform in +-1/sqrt(fan_in); policy heads scaled by 1e-2.
PolicyParams init_policy(const PolicyLayout& layout, Rng& rng);
CriticParams init_critic(const CriticLayout& layout, Rng& rng);

struct PolicyHeads {
  DiffValue mean;
  DiffValue log_std;  // clamped
};

struct PolicySample {
  DiffValue action;    // [n, action_dim]
  DiffValue log_prob;  // [n, 1]
};

PolicyHeads policy_heads(const PolicyLayout& layout, const ParamSet& params, const DiffValue& states);

/// Density of a = b * tanh(mean + std * noise) under a tanh-squashed diagonal
/// Gaussian, reparameterized on `noise`. The tanh Jacobian term is computed as
/// 2 * (log 2 - u - softplus(-2u)).
PolicySample squashed_gaussian(const DiffValue& mean, const DiffValue& log_std, const Matrix& noise,
                               double action_bound);

/// Reparameterized sample for a batch of states [n, state_dim]; noise is [n, action_dim].
PolicySample policy_sample(const PolicyLayout& layout, const ParamSet& params, const DiffValue& states,
                           const Matrix& noise);

/// b * tanh(mean(s)).
DiffValue policy_deterministic(const PolicyLayout& layout, const ParamSet& params,
                               const DiffValue& states);

/// Convenience: deterministic actions for plain state rows, no graph retained.
Matrix act_deterministic(const PolicyParams& policy, const Matrix& states);
Matrix act_stochastic(const PolicyParams& policy, const Matrix& states, Rng& rng);

struct QPair {
  DiffValue q1;  // [n, 1]
  DiffValue q2;  // [n, 1]; invalid when the critic is not twin
};

QPair q_values(const CriticLayout& layout, const ParamSet& params, const DiffValue& states,
               const DiffValue& actions);

/// Elementwise min of the twin heads, or q1 alone for a single critic.
DiffValue min_q(const CriticLayout& layout, const ParamSet& params, const DiffValue& states,
                const DiffValue& actions);

/// target <- tau * online + (1 - tau) * target.
void polyak_update(TensorMap& target, const TensorMap& online, double tau);

}  // namespace metasac::nn
