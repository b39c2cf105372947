#include "metasac/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metasac::env {

namespace {

Vector clip_action(const Vector& action, const EnvSpec& spec) {
  if (action.size() != spec.action_dim) {
    throw std::invalid_argument("action has dimension " + std::to_string(action.size()) +
                                ", expected " + std::to_string(spec.action_dim));
  }
  return action.cwiseMax(-spec.action_bound).cwiseMin(spec.action_bound);
}

void require_finite(const Vector& v, const char* env) {
  if (!v.allFinite()) throw std::domain_error(std::string(env) + ": non-finite state");
}

}  // namespace

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  return w - std::numbers::pi;
}

PointMass2D::PointMass2D() : spec_{4, 2, 1.0, 200} {}

EnvState PointMass2D::reset(Rng& rng) const {
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  EnvState s{Vector::Zero(4), 0};
  s.internal(0) = pos(rng);
  s.internal(1) = pos(rng);
  return s;
}

StepResult PointMass2D::step(const EnvState& state, const Vector& action) const {
  require_finite(state.internal, "pointmass");
  const Vector a = clip_action(action, spec_);
  StepResult out;
  out.next.internal.resize(4);
  const Eigen::Vector2d p = state.internal.head<2>();
  const Eigen::Vector2d v = state.internal.tail<2>();
  const Eigen::Vector2d v_next = 0.95 * v + 0.1 * a.head<2>();
  const Eigen::Vector2d p_next = p + 0.1 * v_next;
  out.next.internal << p_next, v_next;
  out.next.step = state.step + 1;
  out.reward = -p_next.norm() - 0.01 * a.squaredNorm();
  out.done = out.next.step >= spec_.horizon;
  require_finite(out.next.internal, "pointmass");
  return out;
}

Pendulum::Pendulum() : spec_{3, 1, 2.0, 200} {}

EnvState Pendulum::from_angle(double theta, double theta_dot) {
  EnvState s{Vector(2), 0};
  s.internal << theta, theta_dot;
  return s;
}

EnvState Pendulum::reset(Rng& rng) const {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> rate(-1.0, 1.0);
  const double theta = angle(rng);
  const double theta_dot = rate(rng);
  return from_angle(theta, theta_dot);
}

StepResult Pendulum::step(const EnvState& state, const Vector& action) const {
  require_finite(state.internal, "pendulum");
  constexpr double dt = 0.05;
  const double a = clip_action(action, spec_)(0);
  const double theta = state.internal(0);
  const double theta_dot = state.internal(1);

  const double accel = -10.0 * std::sin(theta) + 3.0 * a;
  const double theta_dot_next = std::clamp(theta_dot + accel * dt, -8.0, 8.0);
  const double theta_next = theta + theta_dot_next * dt;

  StepResult out;
  out.next = from_angle(theta_next, theta_dot_next);
  out.next.step = state.step + 1;
  const double w = wrap_angle(theta);
  out.reward = -(w * w + 0.1 * theta_dot * theta_dot + 0.001 * a * a);
  out.done = out.next.step >= spec_.horizon;
  require_finite(out.next.internal, "pendulum");
  return out;
}

Vector Pendulum::observe(const EnvState& state) const {
  Vector o(3);
  o << std::cos(state.internal(0)), std::sin(state.internal(0)), state.internal(1);
  return o;
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "pointmass") return std::make_unique<PointMass2D>();
  if (name == "pendulum") return std::make_unique<Pendulum>();
  throw std::invalid_argument("unknown environment: " + name + " (expected pointmass or pendulum)");
}

}  // namespace metasac::env
