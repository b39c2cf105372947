#pragma once

#include "metasac/buffers.hpp"
#include "metasac/envs.hpp"
#include "metasac/networks.hpp"

#include <functional>

namespace metasac::sac {

using ad::DiffValue;
using ad::Matrix;
using ad::ParamSet;
using ad::TensorMap;

struct SacHyper {
  double gamma = 0.99;
  double tau = 0.05;
  int batch_size = 256;
  double lr_q = 3e-4;
  double lr_pi = 3e-4;
  int start_steps = 1000;

  void validate() const;
};

enum class OptimizerKind { Sgd, RmsProp, Adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

/// Per-parameter optimizer statistics. RMSProp keeps its accumulator in
/// `second`; Adam keeps both moments. Moments are zero-initialized on first use.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double rho = 0.99;       // RMSProp decay
  double epsilon = 1e-8;   // 1e-12 for RMSProp, see make_optimizer
  double beta1 = 0.9;
  double beta2 = 0.999;
  TensorMap first;
  TensorMap second;
  long steps = 0;
};

/// RMSProp defaults to epsilon 1e-12, Adam to 1e-8.
OptimizerState make_optimizer(OptimizerKind kind, double rho = 0.99);

/// One in-place update of `params` from `grads` (same identifiers and shapes).
///   RMSProp: v <- rho v + (1 - rho) g^2,  p <- p - lr g / (sqrt(v) + eps)
///   Adam:    bias-corrected moments
void optimizer_step(TensorMap& params, const TensorMap& grads, OptimizerState& state, double lr);

/// Soft Bellman targets y = r + gamma (1 - terminal) (min Qhat(s', a') - alpha log pi(a'|s')),
/// with a' reparameterized on `noise` [B, action_dim]. Returned as plain values.
Matrix q_target(const replay::Batch& batch, double alpha, const nn::PolicyParams& policy,
                const nn::CriticParams& target, double gamma, const Matrix& noise);

/// Mean over critics of mean_batch 0.5 (Q(s, a) - y)^2.
DiffValue q_loss(const nn::CriticLayout& layout, const ParamSet& critic, const replay::Batch& batch,
                 const Matrix& targets);

/// The two halves of the actor loss: L_pi = alpha * log_prob_mean + neg_q_mean.
struct PolicyLossTerms {
  DiffValue log_prob_mean;  // mean log pi(a|s)
  DiffValue neg_q_mean;     // mean -min Q(s, a), critic held constant
  Matrix log_probs;         // per-sample log pi, [B, 1]
};

PolicyLossTerms policy_loss_terms(const nn::PolicyLayout& layout, const ParamSet& policy,
                                  const nn::CriticParams& critic, const Matrix& states,
                                  const Matrix& noise);

DiffValue policy_loss(const nn::PolicyLayout& layout, const ParamSet& policy,
                      const nn::CriticParams& critic, double alpha, const Matrix& states,
                      const Matrix& noise);

struct UpdateStats {
  double loss = 0.0;
  Matrix log_probs;  // filled by the actor update only
};

/// One gradient step of the critic on the given batch and targets.
UpdateStats update_critic(nn::CriticParams& critic, OptimizerState& opt, const replay::Batch& batch,
                          const Matrix& targets, double lr);

/// One gradient step of the actor at temperature alpha.
UpdateStats update_policy(nn::PolicyParams& policy, OptimizerState& opt, const nn::CriticParams& critic,
                          double alpha, const Matrix& states, const Matrix& noise, double lr);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over rollouts
  std::vector<double> returns;
  Matrix visited;    // every observed state, one row per step (for the exploration metrics)
};

using ActFn = std::function<Matrix(const Matrix& observations)>;

/// Undiscounted returns of `n_rollouts` full episodes run in lockstep from fresh resets.
EvalResult evaluate(const ActFn& act, const env::Environment& env, int n_rollouts, Rng& rng);

/// Same with the deterministic policy b * tanh(mean(s)).
EvalResult evaluate(const nn::PolicyParams& policy, const env::Environment& env, int n_rollouts, Rng& rng);

}  // namespace metasac::sac
