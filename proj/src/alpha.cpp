#include "metasac/alpha.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metasac::alpha {

Tuner parse_tuner(const std::string& name) {
  if (name == "fixed") return Tuner::Fixed;
  if (name == "dual") return Tuner::Dual;
  if (name == "meta") return Tuner::Meta;
  throw std::invalid_argument("unknown alpha tuner '" + name + "'");
}

std::string to_string(Tuner t) {
  switch (t) {
    case Tuner::Fixed: return "fixed";
    case Tuner::Dual: return "dual";
    case Tuner::Meta: return "meta";
  }
  return "?";
}

double AlphaState::alpha() const { return std::exp(log_alpha); }

AlphaState make_alpha_state(double initial_alpha, double lr, bool use_adam) {
  if (!(initial_alpha > 0.0) || !std::isfinite(initial_alpha)) {
    throw std::invalid_argument("initial alpha must be positive and finite");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("alpha learning rate must be positive");
  AlphaState s;
  s.log_alpha = std::min(std::log(initial_alpha), s.clip_max);
  s.lr = lr;
  if (use_adam) s.adam.emplace();
  return s;
}

double FixedSchedule::at(long step) const {
  return alpha0 * std::exp(-kappa * static_cast<double>(step));
}

void FixedSchedule::validate() const {
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw std::invalid_argument("fixed alpha must be positive");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("alpha decay rate must be >= 0");
}

FixedSchedule FixedSchedule::decaying(double alpha_start, double alpha_end, long final_step) {
  if (!(alpha_start > 0.0) || !(alpha_end > 0.0)) throw std::invalid_argument("fixed alpha must be positive");
  if (final_step <= 0) throw std::invalid_argument("decay horizon must be positive");
  FixedSchedule s{alpha_start, std::log(alpha_start / alpha_end) / static_cast<double>(final_step)};
  s.validate();
  return s;
}

void apply_log_alpha_gradient(AlphaState& state, double g) {
  if (!std::isfinite(g)) throw std::domain_error("non-finite log-alpha gradient");
  state.last_grad = g;
  double step = g;
  if (state.adam) {
    auto& a = *state.adam;
    ++a.steps;
    a.m = a.beta1 * a.m + (1.0 - a.beta1) * g;
    a.v = a.beta2 * a.v + (1.0 - a.beta2) * g * g;
    const double mhat = a.m / (1.0 - std::pow(a.beta1, static_cast<double>(a.steps)));
    const double vhat = a.v / (1.0 - std::pow(a.beta2, static_cast<double>(a.steps)));
    step = mhat / (std::sqrt(vhat) + a.epsilon);
  }
  state.log_alpha = std::min(state.log_alpha - state.lr * step, state.clip_max);
}

void dual_update(AlphaState& state, const Eigen::MatrixXd& log_probs) {
  if (log_probs.size() == 0) throw std::invalid_argument("dual_update: empty batch");
  const double entropy = -log_probs.mean();
  apply_log_alpha_gradient(state, state.alpha() * (entropy - state.target_entropy));
}

void meta_update(AlphaState& state, double grad_alpha) {
  double g = state.alpha() * grad_alpha;
  if (state.grad_clip > 0.0) g = std::clamp(g, -state.grad_clip, state.grad_clip);
  apply_log_alpha_gradient(state, g);
}

}  // namespace metasac::alpha
