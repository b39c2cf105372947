#pragma once

#include "metasac/networks.hpp"
#include "metasac/sac.hpp"

#include <functional>

namespace metasac::meta {

using ad::DiffValue;
using ad::Matrix;
using ad::ParamSet;
using ad::TensorMap;

/// grad_phi L_pi(alpha) = alpha * g_H + g_Q for the same batch and noise.
struct GradDecomposition {
  TensorMap g_H;  // grad of mean log pi
  TensorMap g_Q;  // grad of mean -min Q
};

GradDecomposition decompose_policy_grad(const nn::PolicyParams& policy, const nn::CriticParams& critic,
                                        const Matrix& states, const Matrix& noise);

/// Policy parameters after one optimizer step at temperature alpha, with their
/// derivative in alpha. The real optimizer state is never touched.
struct HypotheticalStep {
  TensorMap phi_plus;
  TensorMap dphi_dalpha;
};

/// RMSProp step from accumulator v (missing entries read as zero):
///   g = alpha g_H + g_Q,  v' = rho v + (1 - rho) g^2,  phi+ = phi - lr g / (sqrt(v') + eps)
///   dphi+/dalpha = -lr [g_H / (sqrt(v') + eps) - (1 - rho) g^2 g_H / (sqrt(v') (sqrt(v') + eps)^2)]
/// The second term is taken as 0 where v' = 0, its limit as g -> 0.
HypotheticalStep rmsprop_step_with_sensitivity(const TensorMap& phi, const GradDecomposition& dec, double alpha,
                                               const TensorMap& v, double lr, double rho, double epsilon);

/// Plain gradient step: dphi+/dalpha = -lr g_H.
HypotheticalStep sgd_step_with_sensitivity(const TensorMap& phi, const GradDecomposition& dec, double alpha,
                                           double lr);

/// Dispatches on the optimizer kind; Adam is rejected (no sensitivity rule).
HypotheticalStep hypothetical_step(const TensorMap& phi, const GradDecomposition& dec, double alpha,
                                   const sac::OptimizerState& opt, double lr);

/// mean over s0 of -min Q(s0, b tanh(mean_{phi+}(s0))), critic held constant.
DiffValue meta_loss(const nn::PolicyLayout& layout, const ParamSet& phi_plus, const nn::CriticParams& critic,
                    const Matrix& initial_states);

/// Everything the temperature update reads. `critic` defines the actor loss;
/// `meta_critic` scores the updated policy (the soft critic itself, or the
/// classic-Q auxiliary critic in that ablation).
struct MetaContext {
  const nn::PolicyParams& policy;
  const nn::CriticParams& critic;
  const nn::CriticParams& meta_critic;
  const Matrix& states;          // batch states
  const Matrix& noise;           // reparameterization noise, reused at every alpha
  const Matrix& initial_states;  // D0, or replay states in the arbitrary-states ablation
  const sac::OptimizerState& optimizer;  // policy optimizer, read only
  double lr;
};

struct MetaGradResult {
  double grad = 0.0;  // dL_meta / dalpha
  double loss = 0.0;  // L_meta at alpha
};

/// Analytic path: <grad_{phi+} L_meta, dphi+/dalpha>.
MetaGradResult meta_alpha_grad(const MetaContext& ctx, double alpha);

/// L_meta(alpha) recomputed by a direct actor-loss backward and a real
/// optimizer step on a copy of the optimizer state.
double meta_loss_at(const MetaContext& ctx, double alpha);

/// (f(x + h) - f(x - h)) / 2h.
double central_difference(const std::function<double(double)>& f, double x, double h);

/// Central difference of meta_loss_at.
double meta_alpha_fd_oracle(const MetaContext& ctx, double alpha, double h);

}  // namespace metasac::meta
