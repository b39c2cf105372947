#include "metasac/gradcheck.hpp"

#include "metasac/random.hpp"

#include <algorithm>
#include <cmath>

namespace metasac::meta {

std::vector<GradcheckCase> gradcheck_cases(int count, std::uint64_t seed) {
  static constexpr int kWidths[] = {4, 8, 16};
  static constexpr int kBatches[] = {4, 16};
  Rng rng = make_stream(seed, "gradcheck");
  std::uniform_real_distribution<double> log_alpha(-4.0, 0.0);
  std::vector<GradcheckCase> out;
  for (int i = 0; i < count; ++i) {
    GradcheckCase c;
    c.seed = rng();
    c.width = kWidths[i % 3];
    c.batch = kBatches[(i / 3) % 2];
    c.alpha = std::exp(log_alpha(rng));
    out.push_back(c);
  }
  return out;
}

GradcheckOutcome check_metagradient(const GradcheckCase& c, double h) {
  Rng rng(c.seed);
  const nn::PolicyLayout pl{c.state_dim, c.action_dim, c.width, 2, 1.0};
  const nn::CriticLayout cl{c.state_dim, c.action_dim, c.width, 2, true};
  nn::PolicyParams policy = nn::init_policy(pl, rng);
  const nn::CriticParams critic = nn::init_critic(cl, rng);
  sac::OptimizerState opt = sac::make_optimizer(sac::OptimizerKind::RmsProp);
  for (int k = 0; k < c.warm_steps; ++k) {
    const Matrix s = standard_normal(c.batch, c.state_dim, rng);
    const Matrix e = standard_normal(c.batch, c.action_dim, rng);
    sac::update_policy(policy, opt, critic, c.alpha, s, e, c.lr);
  }
  const Matrix states = standard_normal(c.batch, c.state_dim, rng);
  const Matrix noise = standard_normal(c.batch, c.action_dim, rng);
  const Matrix d0 = standard_normal(c.d0_size, c.state_dim, rng);

  const MetaContext ctx{policy, critic, critic, states, noise, d0, opt, c.lr};
  GradcheckOutcome out;
  out.input = c;
  out.analytic = meta_alpha_grad(ctx, c.alpha).grad;
  out.oracle = meta_alpha_fd_oracle(ctx, c.alpha, h);
  out.rel_error = std::fabs(out.analytic - out.oracle) / std::max(std::fabs(out.oracle), 1e-8);
  return out;
}

}  // namespace metasac::meta
