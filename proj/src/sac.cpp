#include "metasac/sac.hpp"

#include <cmath>
#include <stdexcept>

namespace metasac::sac {

void SacHyper::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(lr_q > 0.0) || !(lr_pi > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (start_steps < 0) throw std::invalid_argument("start step must be non-negative");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "rmsprop") return OptimizerKind::RmsProp;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd, rmsprop or adam)");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::RmsProp: return "rmsprop";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

OptimizerState make_optimizer(OptimizerKind kind, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("RMSProp decay must lie in [0, 1)");
  OptimizerState s;
  s.kind = kind;
  s.rho = rho;
  s.epsilon = kind == OptimizerKind::RmsProp ? 1e-12 : 1e-8;
  return s;
}

namespace {

Matrix& moment(TensorMap& m, const std::string& id, const Matrix& like) {
  auto it = m.find(id);
  if (it == m.end()) it = m.emplace(id, Matrix::Zero(like.rows(), like.cols())).first;
  return it->second;
}

}  // namespace

void optimizer_step(TensorMap& params, const TensorMap& grads, OptimizerState& state, double lr) {
  if (grads.size() != params.size()) throw std::invalid_argument("optimizer_step: gradient set differs from parameters");
  ++state.steps;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.steps));
  for (auto& [id, p] : params) {
    auto git = grads.find(id);
    if (git == grads.end()) throw std::invalid_argument("optimizer_step: no gradient for " + id);
    const Matrix& g = git->second;
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw std::invalid_argument("optimizer_step: gradient shape mismatch for " + id);
    }
    switch (state.kind) {
      case OptimizerKind::Sgd:
        p -= lr * g;
        break;
      case OptimizerKind::RmsProp: {
        Matrix& v = moment(state.second, id, p);
        v = state.rho * v + (1.0 - state.rho) * g.cwiseAbs2();
        p.array() -= lr * g.array() / (v.array().sqrt() + state.epsilon);
        break;
      }
      case OptimizerKind::Adam: {
        Matrix& m = moment(state.first, id, p);
        Matrix& v = moment(state.second, id, p);
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
        break;
      }
    }
  }
}

Matrix q_target(const replay::Batch& batch, double alpha, const nn::PolicyParams& policy,
                const nn::CriticParams& target, double gamma, const Matrix& noise) {
  const ParamSet pi = ParamSet::constants(policy.values);
  const ParamSet qhat = ParamSet::constants(target.values);
  DiffValue next = ad::constant(batch.next_states);
  nn::PolicySample a = nn::policy_sample(policy.layout, pi, next, noise);
  DiffValue q = nn::min_q(target.layout, qhat, next, a.action);
  const Matrix soft = q.data() - alpha * a.log_prob.data();
  return (batch.rewards.array() + gamma * (1.0 - batch.terminals.array()) * soft.array()).matrix();
}

DiffValue q_loss(const nn::CriticLayout& layout, const ParamSet& critic, const replay::Batch& batch,
                 const Matrix& targets) {
  if (targets.rows() != batch.size() || targets.cols() != 1) {
    throw ad::ShapeError("q_loss: targets must be [" + std::to_string(batch.size()) + ",1]");
  }
  DiffValue y = ad::constant(targets);
  nn::QPair q = nn::q_values(layout, critic, ad::constant(batch.states), ad::constant(batch.actions));
  DiffValue loss = ad::mean(ad::square(q.q1 - y));
  if (layout.twin) loss = loss + ad::mean(ad::square(q.q2 - y));
  return (layout.twin ? 0.25 : 0.5) * loss;
}

PolicyLossTerms policy_loss_terms(const nn::PolicyLayout& layout, const ParamSet& policy,
                                  const nn::CriticParams& critic, const Matrix& states,
                                  const Matrix& noise) {
  DiffValue s = ad::constant(states);
  nn::PolicySample a = nn::policy_sample(layout, policy, s, noise);
  DiffValue q = nn::min_q(critic.layout, ParamSet::constants(critic.values), s, a.action);
  return {ad::mean(a.log_prob), -ad::mean(q), a.log_prob.data()};
}

DiffValue policy_loss(const nn::PolicyLayout& layout, const ParamSet& policy,
                      const nn::CriticParams& critic, double alpha, const Matrix& states,
                      const Matrix& noise) {
  PolicyLossTerms t = policy_loss_terms(layout, policy, critic, states, noise);
  return alpha * t.log_prob_mean + t.neg_q_mean;
}

UpdateStats update_critic(nn::CriticParams& critic, OptimizerState& opt, const replay::Batch& batch,
                          const Matrix& targets, double lr) {
  const ParamSet vars = ParamSet::variables(critic.values);
  DiffValue loss = q_loss(critic.layout, vars, batch, targets);
  TensorMap grads = ad::backward(loss, vars);
  optimizer_step(critic.values, grads, opt, lr);
  return {loss.item(), {}};
}

UpdateStats update_policy(nn::PolicyParams& policy, OptimizerState& opt, const nn::CriticParams& critic,
                          double alpha, const Matrix& states, const Matrix& noise, double lr) {
  const ParamSet vars = ParamSet::variables(policy.values);
  PolicyLossTerms t = policy_loss_terms(policy.layout, vars, critic, states, noise);
  DiffValue loss = alpha * t.log_prob_mean + t.neg_q_mean;
  TensorMap grads = ad::backward(loss, vars);
  optimizer_step(policy.values, grads, opt, lr);
  return {loss.item(), std::move(t.log_probs)};
}

EvalResult evaluate(const ActFn& act, const env::Environment& env, int n_rollouts, Rng& rng) {
  if (n_rollouts < 1) throw std::invalid_argument("evaluate needs at least one rollout");
  const env::EnvSpec& spec = env.spec();
  std::vector<env::EnvState> states;
  states.reserve(static_cast<std::size_t>(n_rollouts));
  for (int i = 0; i < n_rollouts; ++i) states.push_back(env.reset(rng));

  EvalResult out;
  out.returns.assign(static_cast<std::size_t>(n_rollouts), 0.0);
  out.visited.resize(static_cast<Eigen::Index>(n_rollouts) * spec.horizon, spec.state_dim);
  Matrix obs(n_rollouts, spec.state_dim);
  Eigen::Index row = 0;
  // Every episode has the same fixed horizon, so the batch advances in lockstep.
  for (int t = 0; t < spec.horizon; ++t) {
    for (int i = 0; i < n_rollouts; ++i) {
      obs.row(i) = env.observe(states[static_cast<std::size_t>(i)]).transpose();
      out.visited.row(row++) = obs.row(i);
    }
    const Matrix actions = act(obs);
    for (int i = 0; i < n_rollouts; ++i) {
      auto& s = states[static_cast<std::size_t>(i)];
      env::StepResult r = env.step(s, actions.row(i).transpose());
      out.returns[static_cast<std::size_t>(i)] += r.reward;
      s = std::move(r.next);
    }
  }
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean = sum / n_rollouts;
  double ss = 0.0;
  for (double r : out.returns) ss += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(ss / n_rollouts);
  return out;
}

EvalResult evaluate(const nn::PolicyParams& policy, const env::Environment& env, int n_rollouts, Rng& rng) {
  return evaluate([&](const Matrix& obs) { return nn::act_deterministic(policy, obs); }, env, n_rollouts, rng);
}

}  // namespace metasac::sac
