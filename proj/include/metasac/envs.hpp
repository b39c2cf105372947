#pragma once

#include "metasac/random.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>

namespace metasac::env {

using Vector = Eigen::VectorXd;

struct EnvSpec {
  int state_dim = 1;
  int action_dim = 1;
  double action_bound = 1.0;
  int horizon = 1;
};

/// Internal simulator state plus the number of steps taken in the episode.
struct EnvState {
  Vector internal;
  int step = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;  // horizon reached; never a true termination here
};

/// Deterministic dynamics with a stochastic initial state.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::string name() const = 0;
  virtual EnvState reset(Rng& rng) const = 0;
  /// Pure function of (state, action). Actions are clipped to the bound.
  virtual StepResult step(const EnvState& state, const Vector& action) const = 0;
  virtual Vector observe(const EnvState& state) const = 0;

  EnvState reset(std::uint64_t seed) const {
    Rng rng(seed);
    return reset(rng);
  }
};

/// 2-D point mass pulled to the origin. State (x, y, vx, vy), bound 1, horizon 200.
///   v' = 0.95 v + 0.1 a,  p' = p + 0.1 v',  r = -|p'| - 0.01 |a|^2
class PointMass2D final : public Environment {
 public:
  PointMass2D();
  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pointmass"; }
  EnvState reset(Rng& rng) const override;
  using Environment::reset;
  StepResult step(const EnvState& state, const Vector& action) const override;
  Vector observe(const EnvState& state) const override { return state.internal; }

 private:
  EnvSpec spec_;
};

/// Torque-driven pendulum. Internal state (theta, theta_dot); observation
/// (cos theta, sin theta, theta_dot); bound 2, horizon 200, dt 0.05.
///   theta_ddot = -10 sin(theta) + 3 a,  theta_dot clipped to [-8, 8]
///   r = -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 a^2), on the pre-step state
class Pendulum final : public Environment {
 public:
  Pendulum();
  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pendulum"; }
  EnvState reset(Rng& rng) const override;
  using Environment::reset;
  StepResult step(const EnvState& state, const Vector& action) const override;
  Vector observe(const EnvState& state) const override;

  static EnvState from_angle(double theta, double theta_dot);

 private:
  EnvSpec spec_;
};

/// Angle wrapped to [-pi, pi).
double wrap_angle(double theta);

/// "pointmass" or "pendulum".
std::unique_ptr<Environment> make_env(const std::string& name);

}  // namespace metasac::env
