#include "metasac/networks.hpp"

#include <cmath>
#include <numbers>

namespace metasac::nn {

using ad::Shape;

namespace {

std::string layer_id(const std::string& prefix, int i, const char* kind) {
  return prefix + "." + std::to_string(i) + "." + kind;
}

void init_layer(TensorMap& values, const std::string& w_id, const std::string& b_id, int fan_in,
                int fan_out, double gain, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  values[w_id] = gain * uniform(fan_out, fan_in, -bound, bound, rng);
  values[b_id] = gain * uniform(fan_out, 1, -bound, bound, rng);
}

DiffValue dense(const ParamSet& params, const std::string& w_id, const std::string& b_id,
                const DiffValue& x) {
  return ad::affine(params.at(w_id), x, params.at(b_id));
}

DiffValue trunk(const ParamSet& params, const std::string& prefix, int layers, DiffValue x) {
  for (int i = 0; i < layers; ++i) {
    x = ad::relu(dense(params, layer_id(prefix, i, "W"), layer_id(prefix, i, "b"), x));
  }
  return x;
}

void check_finite(const DiffValue& v, const char* what) {
  if (!v.data().allFinite()) {
    throw ad::DomainError(std::string("policy produced non-finite ") + what);
  }
}

}  // namespace

PolicyParams init_policy(const PolicyLayout& layout, Rng& rng) {
  if (layout.state_dim <= 0 || layout.action_dim <= 0 || layout.hidden_width <= 0 ||
      layout.hidden_layers <= 0 || !(layout.action_bound > 0.0)) {
    throw std::invalid_argument("invalid policy layout");
  }
  PolicyParams p{layout, {}};
  int fan_in = layout.state_dim;
  for (int i = 0; i < layout.hidden_layers; ++i) {
    init_layer(p.values, layer_id("trunk", i, "W"), layer_id("trunk", i, "b"), fan_in,
               layout.hidden_width, 1.0, rng);
    fan_in = layout.hidden_width;
  }
  init_layer(p.values, "mean.W", "mean.b", fan_in, layout.action_dim, 1e-2, rng);
  init_layer(p.values, "log_std.W", "log_std.b", fan_in, layout.action_dim, 1e-2, rng);
  return p;
}

CriticParams init_critic(const CriticLayout& layout, Rng& rng) {
  if (layout.state_dim <= 0 || layout.action_dim <= 0 || layout.hidden_width <= 0 ||
      layout.hidden_layers <= 0) {
    throw std::invalid_argument("invalid critic layout");
  }
  CriticParams c{layout, {}};
  for (const char* head : {"q1", "q2"}) {
    if (!layout.twin && std::string(head) == "q2") break;
    int fan_in = layout.state_dim + layout.action_dim;
    for (int i = 0; i < layout.hidden_layers; ++i) {
      init_layer(c.values, layer_id(head, i, "W"), layer_id(head, i, "b"), fan_in,
                 layout.hidden_width, 1.0, rng);
      fan_in = layout.hidden_width;
    }
    init_layer(c.values, layer_id(head, layout.hidden_layers, "W"),
               layer_id(head, layout.hidden_layers, "b"), fan_in, 1, 1.0, rng);
  }
  return c;
}

PolicyHeads policy_heads(const PolicyLayout& layout, const ParamSet& params, const DiffValue& states) {
  DiffValue h = trunk(params, "trunk", layout.hidden_layers, states);
  DiffValue mean = dense(params, "mean.W", "mean.b", h);
  DiffValue log_std = ad::clamp(dense(params, "log_std.W", "log_std.b", h), kLogStdMin, kLogStdMax);
  return {mean, log_std};
}

PolicySample squashed_gaussian(const DiffValue& mean, const DiffValue& log_std, const Matrix& noise,
                               double action_bound) {
  check_finite(mean, "mean");
  check_finite(log_std, "log-std");
  if (mean.shape().rank() != 2 || !(mean.shape() == log_std.shape()) ||
      noise.rows() != mean.data().rows() || noise.cols() != mean.data().cols()) {
    throw ad::ShapeError("squashed_gaussian: mean " + mean.shape().str() + ", log_std " +
                         log_std.shape().str() + ", noise [" + std::to_string(noise.rows()) + "," +
                         std::to_string(noise.cols()) + "]");
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const double inner_bound = std::nextafter(action_bound, 0.0);

  DiffValue eps = ad::constant(noise);
  DiffValue u = mean + ad::exp(log_std) * eps;
  DiffValue action = ad::clamp(action_bound * ad::tanh(u), -inner_bound, inner_bound);

  Matrix gauss_const = (-0.5 * noise.array().square() - 0.5 * log_2pi).matrix();
  DiffValue log_normal = ad::constant(gauss_const) - log_std;
  // log(b * (1 - tanh(u)^2)) = log b + 2 * (log 2 - u - softplus(-2u))
  DiffValue log_jac = 2.0 * (-u - ad::softplus(-2.0 * u) + std::numbers::ln2) + std::log(action_bound);
  DiffValue log_prob = ad::sum_rows(log_normal - log_jac);
  return {action, log_prob};
}

PolicySample policy_sample(const PolicyLayout& layout, const ParamSet& params, const DiffValue& states,
                           const Matrix& noise) {
  PolicyHeads heads = policy_heads(layout, params, states);
  return squashed_gaussian(heads.mean, heads.log_std, noise, layout.action_bound);
}

DiffValue policy_deterministic(const PolicyLayout& layout, const ParamSet& params,
                               const DiffValue& states) {
  PolicyHeads heads = policy_heads(layout, params, states);
  check_finite(heads.mean, "mean");
  const double inner_bound = std::nextafter(layout.action_bound, 0.0);
  return ad::clamp(layout.action_bound * ad::tanh(heads.mean), -inner_bound, inner_bound);
}

Matrix act_deterministic(const PolicyParams& policy, const Matrix& states) {
  return policy_deterministic(policy.layout, ParamSet::constants(policy.values), ad::constant(states))
      .data();
}

Matrix act_stochastic(const PolicyParams& policy, const Matrix& states, Rng& rng) {
  Matrix noise = standard_normal(states.rows(), policy.layout.action_dim, rng);
  return policy_sample(policy.layout, ParamSet::constants(policy.values), ad::constant(states), noise)
      .action.data();
}

QPair q_values(const CriticLayout& layout, const ParamSet& params, const DiffValue& states,
               const DiffValue& actions) {
  DiffValue x = ad::concat(states, actions);
  auto head = [&](const std::string& prefix) {
    DiffValue h = trunk(params, prefix, layout.hidden_layers, x);
    return dense(params, layer_id(prefix, layout.hidden_layers, "W"),
                 layer_id(prefix, layout.hidden_layers, "b"), h);
  };
  QPair out;
  out.q1 = head("q1");
  if (layout.twin) out.q2 = head("q2");
  return out;
}

DiffValue min_q(const CriticLayout& layout, const ParamSet& params, const DiffValue& states,
                const DiffValue& actions) {
  QPair q = q_values(layout, params, states, actions);
  return layout.twin ? ad::minimum(q.q1, q.q2) : q.q1;
}

void polyak_update(TensorMap& target, const TensorMap& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak_update: tau outside [0, 1]");
  if (target.size() != online.size()) {
    throw std::invalid_argument("polyak_update: parameter sets differ in size");
  }
  for (auto& [id, t] : target) {
    auto it = online.find(id);
    if (it == online.end()) throw std::invalid_argument("polyak_update: missing parameter " + id);
    const Matrix& o = it->second;
    if (o.rows() != t.rows() || o.cols() != t.cols()) {
      throw std::invalid_argument("polyak_update: shape mismatch for " + id);
    }
    t = tau * o + (1.0 - tau) * t;
  }
}

}  // namespace metasac::nn
