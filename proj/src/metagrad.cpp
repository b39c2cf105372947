#include "metasac/metagrad.hpp"

#include <cmath>
#include <stdexcept>

namespace metasac::meta {

GradDecomposition decompose_policy_grad(const nn::PolicyParams& policy, const nn::CriticParams& critic,
                                        const Matrix& states, const Matrix& noise) {
  const ParamSet vars = ParamSet::variables(policy.values);
  sac::PolicyLossTerms t = sac::policy_loss_terms(policy.layout, vars, critic, states, noise);
  // One graph, two roots; backward resets adjoints between calls.
  GradDecomposition dec;
  dec.g_H = ad::backward(t.log_prob_mean, vars);
  dec.g_Q = ad::backward(t.neg_q_mean, vars);
  return dec;
}

namespace {

const Matrix& lookup(const TensorMap& m, const std::string& id) {
  auto it = m.find(id);
  if (it == m.end()) throw std::invalid_argument("gradient decomposition lacks parameter " + id);
  return it->second;
}

}  // namespace

HypotheticalStep rmsprop_step_with_sensitivity(const TensorMap& phi, const GradDecomposition& dec, double alpha,
                                               const TensorMap& v, double lr, double rho, double epsilon) {
  HypotheticalStep out;
  for (const auto& [id, p] : phi) {
    const Matrix& gH = lookup(dec.g_H, id);
    const Matrix& gQ = lookup(dec.g_Q, id);
    Matrix v0 = Matrix::Zero(p.rows(), p.cols());
    if (auto it = v.find(id); it != v.end()) v0 = it->second;
    if ((v0.array() < 0.0).any()) throw std::domain_error("RMSProp accumulator is negative for " + id);

    const Eigen::ArrayXXd g = alpha * gH.array() + gQ.array();
    const Eigen::ArrayXXd vp = rho * v0.array() + (1.0 - rho) * g.square();
    const Eigen::ArrayXXd root = vp.sqrt();
    const Eigen::ArrayXXd denom = root + epsilon;
    out.phi_plus[id] = (p.array() - lr * g / denom).matrix();
    const Eigen::ArrayXXd second =
        (vp > 0.0).select((1.0 - rho) * g.square() * gH.array() / (root * denom.square()), 0.0);
    out.dphi_dalpha[id] = (-lr * (gH.array() / denom - second)).matrix();
  }
  return out;
}

HypotheticalStep sgd_step_with_sensitivity(const TensorMap& phi, const GradDecomposition& dec, double alpha,
                                           double lr) {
  HypotheticalStep out;
  for (const auto& [id, p] : phi) {
    const Matrix& gH = lookup(dec.g_H, id);
    out.phi_plus[id] = p - lr * (alpha * gH + lookup(dec.g_Q, id));
    out.dphi_dalpha[id] = -lr * gH;
  }
  return out;
}

HypotheticalStep hypothetical_step(const TensorMap& phi, const GradDecomposition& dec, double alpha,
                                   const sac::OptimizerState& opt, double lr) {
  switch (opt.kind) {
    case sac::OptimizerKind::RmsProp:
      return rmsprop_step_with_sensitivity(phi, dec, alpha, opt.second, lr, opt.rho, opt.epsilon);
    case sac::OptimizerKind::Sgd:
      return sgd_step_with_sensitivity(phi, dec, alpha, lr);
    case sac::OptimizerKind::Adam:
      break;
  }
  throw std::invalid_argument("metagradient needs an RMSProp or SGD policy optimizer");
}

DiffValue meta_loss(const nn::PolicyLayout& layout, const ParamSet& phi_plus, const nn::CriticParams& critic,
                    const Matrix& initial_states) {
  if (initial_states.rows() == 0) throw std::invalid_argument("meta_loss: no initial states");
  DiffValue s0 = ad::constant(initial_states);
  DiffValue a = nn::policy_deterministic(layout, phi_plus, s0);
  return -ad::mean(nn::min_q(critic.layout, ParamSet::constants(critic.values), s0, a));
}

MetaGradResult meta_alpha_grad(const MetaContext& ctx, double alpha) {
  GradDecomposition dec = decompose_policy_grad(ctx.policy, ctx.critic, ctx.states, ctx.noise);
  HypotheticalStep step = hypothetical_step(ctx.policy.values, dec, alpha, ctx.optimizer, ctx.lr);
  const ParamSet leaves = ParamSet::variables(step.phi_plus);
  DiffValue loss = meta_loss(ctx.policy.layout, leaves, ctx.meta_critic, ctx.initial_states);
  TensorMap u = ad::backward(loss, leaves);
  return {ad::dot(u, step.dphi_dalpha), loss.item()};
}

double meta_loss_at(const MetaContext& ctx, double alpha) {
  const ParamSet vars = ParamSet::variables(ctx.policy.values);
  DiffValue l = sac::policy_loss(ctx.policy.layout, vars, ctx.critic, alpha, ctx.states, ctx.noise);
  TensorMap grads = ad::backward(l, vars);
  TensorMap phi = ctx.policy.values;
  sac::OptimizerState opt = ctx.optimizer;
  sac::optimizer_step(phi, grads, opt, ctx.lr);
  return meta_loss(ctx.policy.layout, ParamSet::constants(phi), ctx.meta_critic, ctx.initial_states).item();
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double meta_alpha_fd_oracle(const MetaContext& ctx, double alpha, double h) {
  return central_difference([&](double a) { return meta_loss_at(ctx, a); }, alpha, h);
}

}  // namespace metasac::meta
