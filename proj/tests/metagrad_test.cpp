#include "metasac/gradcheck.hpp"
#include "metasac/metagrad.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace metasac;
using namespace metasac::meta;
using metasac::testing::hash_tensors;
using metasac::testing::max_rel_error;

namespace {

// Small policy/critic pair with a warmed-up RMSProp accumulator.
struct Instance {
  nn::PolicyParams policy;
  nn::CriticParams critic;
  Matrix states, noise, d0;
  sac::OptimizerState opt = sac::make_optimizer(sac::OptimizerKind::RmsProp);
  double lr = 3e-4;

  explicit Instance(std::uint64_t seed, int width = 8, int batch = 16) {
    Rng rng(seed);
    policy = nn::init_policy({3, 2, width, 2, 1.0}, rng);
    critic = nn::init_critic({3, 2, width, 2, true}, rng);
    for (int k = 0; k < 5; ++k) {
      sac::update_policy(policy, opt, critic, 0.2, standard_normal(batch, 3, rng), standard_normal(batch, 2, rng),
                         lr);
    }
    states = standard_normal(batch, 3, rng);
    noise = standard_normal(batch, 2, rng);
    d0 = standard_normal(16, 3, rng);
  }

  MetaContext context() const { return {policy, critic, critic, states, noise, d0, opt, lr}; }
};

}  // namespace

TEST(Decomposition, ReconstructsDirectGradient) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Instance in(seed);
    GradDecomposition dec = decompose_policy_grad(in.policy, in.critic, in.states, in.noise);
    const ParamSet vars = ParamSet::variables(in.policy.values);
    for (double alpha : {0.0, 0.37}) {
      TensorMap direct =
          ad::backward(sac::policy_loss(in.policy.layout, vars, in.critic, alpha, in.states, in.noise), vars);
      if (alpha == 0.0) {
        for (const auto& [id, g] : direct) EXPECT_TRUE(g == dec.g_Q.at(id)) << id;
      }
      // Relative to the size of the summed terms: where alpha g_H and g_Q
      // nearly cancel, the direct gradient can only be as exact as its inputs.
      double worst = 0.0;
      for (const auto& [id, g] : direct) {
        const Eigen::ArrayXXd terms = (alpha * dec.g_H.at(id)).array().abs() + dec.g_Q.at(id).array().abs();
        const Eigen::ArrayXXd rebuilt = (alpha * dec.g_H.at(id) + dec.g_Q.at(id)).array();
        const Eigen::ArrayXXd scale = terms.max(g.array().abs()).max(1e-300);
        worst = std::max(worst, ((rebuilt - g.array()).abs() / scale).maxCoeff());
      }
      EXPECT_LE(worst, 1e-12) << seed << " alpha " << alpha;
    }
  }
}

TEST(Decomposition, EntropyTermIgnoresCritic) {
  Instance in(3);
  GradDecomposition a = decompose_policy_grad(in.policy, in.critic, in.states, in.noise);
  nn::CriticParams other = in.critic;
  for (auto& [id, m] : other.values) m.array() += 0.5;
  GradDecomposition b = decompose_policy_grad(in.policy, other, in.states, in.noise);
  EXPECT_EQ(hash_tensors(a.g_H), hash_tensors(b.g_H));
  EXPECT_NE(hash_tensors(a.g_Q), hash_tensors(b.g_Q));
}

TEST(HypotheticalStep, ScalarRmsPropExample) {
  TensorMap phi{{"w", Matrix::Zero(1, 1)}};
  GradDecomposition dec{{{"w", Matrix::Constant(1, 1, 2.0)}}, {{"w", Matrix::Constant(1, 1, 1.0)}}};
  TensorMap v{{"w", Matrix::Constant(1, 1, 1.0)}};
  HypotheticalStep s = rmsprop_step_with_sensitivity(phi, dec, 0.5, v, 0.1, 0.9, 1e-12);
  EXPECT_NEAR(s.phi_plus.at("w")(0), -0.175412, 1e-6);
  EXPECT_NEAR(s.dphi_dalpha.at("w")(0), -0.121439, 1e-6);

  auto phi_at = [&](double a) { return rmsprop_step_with_sensitivity(phi, dec, a, v, 0.1, 0.9, 1e-12).phi_plus.at("w")(0); };
  EXPECT_NEAR(central_difference(phi_at, 0.5, 1e-5), s.dphi_dalpha.at("w")(0), 1e-9);
}

TEST(HypotheticalStep, ZeroEntropyGradientGivesZeroSensitivity) {
  Instance in(1);
  GradDecomposition dec = decompose_policy_grad(in.policy, in.critic, in.states, in.noise);
  for (auto& [id, g] : dec.g_H) g.setZero();
  HypotheticalStep s = hypothetical_step(in.policy.values, dec, 0.3, in.opt, in.lr);
  for (const auto& [id, d] : s.dphi_dalpha) EXPECT_TRUE(d.isZero()) << id;
  // And the whole metagradient vanishes.
  sac::OptimizerState sgd = sac::make_optimizer(sac::OptimizerKind::Sgd);
  HypotheticalStep t = hypothetical_step(in.policy.values, dec, 0.3, sgd, in.lr);
  for (const auto& [id, d] : t.dphi_dalpha) EXPECT_TRUE(d.isZero()) << id;
}

TEST(HypotheticalStep, ZeroAccumulatorAndZeroGradient) {
  TensorMap phi{{"w", Matrix::Constant(1, 2, 0.5)}};
  GradDecomposition dec{{{"w", Matrix::Constant(1, 2, 1.0)}}, {{"w", Matrix::Constant(1, 2, -0.4)}}};
  // g = 0.4 * 1 - 0.4 = 0 and v = 0: v' = 0, the step and its sensitivity stay finite.
  HypotheticalStep s = rmsprop_step_with_sensitivity(phi, dec, 0.4, {}, 0.1, 0.99, 1e-12);
  EXPECT_TRUE(s.phi_plus.at("w") == phi.at("w"));
  EXPECT_TRUE(s.dphi_dalpha.at("w").allFinite());
}

TEST(HypotheticalStep, RejectsNegativeAccumulatorAndAdam) {
  TensorMap phi{{"w", Matrix::Zero(1, 1)}};
  GradDecomposition dec{{{"w", Matrix::Ones(1, 1)}}, {{"w", Matrix::Ones(1, 1)}}};
  EXPECT_THROW(rmsprop_step_with_sensitivity(phi, dec, 0.2, {{"w", Matrix::Constant(1, 1, -1.0)}}, 0.1, 0.9, 1e-12),
               std::domain_error);
  EXPECT_THROW(hypothetical_step(phi, dec, 0.2, sac::make_optimizer(sac::OptimizerKind::Adam), 0.1),
               std::invalid_argument);
}

TEST(HypotheticalStep, VectorSensitivityMatchesFiniteDifference) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Instance in(10 + seed);
    GradDecomposition dec = decompose_policy_grad(in.policy, in.critic, in.states, in.noise);
    const double alpha = 0.05 + 0.1 * static_cast<double>(seed), h = 1e-5, lr = 0.1;
    HypotheticalStep s = hypothetical_step(in.policy.values, dec, alpha, in.opt, lr);
    TensorMap plus = hypothetical_step(in.policy.values, dec, alpha + h, in.opt, lr).phi_plus;
    TensorMap minus = hypothetical_step(in.policy.values, dec, alpha - h, in.opt, lr).phi_plus;
    TensorMap fd;
    for (const auto& [id, p] : plus) fd[id] = (p - minus.at(id)) / (2 * h);
    EXPECT_LE(max_rel_error(s.dphi_dalpha, fd), 1e-5) << seed;
  }
}

TEST(HypotheticalStep, MatchesRealOptimizerStep) {
  Instance in(4);
  const double alpha = 0.3;
  GradDecomposition dec = decompose_policy_grad(in.policy, in.critic, in.states, in.noise);
  HypotheticalStep s = hypothetical_step(in.policy.values, dec, alpha, in.opt, in.lr);
  nn::PolicyParams real = in.policy;
  sac::OptimizerState opt = in.opt;
  sac::update_policy(real, opt, in.critic, alpha, in.states, in.noise, in.lr);
  EXPECT_LE(max_rel_error(s.phi_plus, real.values, 1e-10), 1e-12);
}

TEST(MetaLoss, ConstantCriticGivesConstantLoss) {
  Instance in(2);
  nn::CriticParams flat = in.critic;
  for (const char* head : {"q1", "q2"}) {
    flat.values.at(std::string(head) + ".2.W").setZero();
    flat.values.at(std::string(head) + ".2.b").setConstant(1.75);
  }
  EXPECT_DOUBLE_EQ(meta_loss(in.policy.layout, ParamSet::constants(in.policy.values), flat, in.d0).item(), -1.75);
  MetaContext ctx{in.policy, in.critic, flat, in.states, in.noise, in.d0, in.opt, in.lr};
  EXPECT_EQ(meta_alpha_grad(ctx, 0.2).grad, 0.0);
  EXPECT_THROW(meta_loss(in.policy.layout, ParamSet::constants(in.policy.values), flat, Matrix(0, 3)),
               std::invalid_argument);
}

TEST(MetaAlphaGrad, SgdClosedForm) {
  Instance in(6);
  sac::OptimizerState sgd = sac::make_optimizer(sac::OptimizerKind::Sgd);
  MetaContext ctx{in.policy, in.critic, in.critic, in.states, in.noise, in.d0, sgd, 0.01};
  const double alpha = 0.25;
  GradDecomposition dec = decompose_policy_grad(in.policy, in.critic, in.states, in.noise);
  HypotheticalStep s = sgd_step_with_sensitivity(in.policy.values, dec, alpha, 0.01);
  for (const auto& [id, d] : s.dphi_dalpha) EXPECT_TRUE(d == -0.01 * dec.g_H.at(id)) << id;
  const ParamSet leaves = ParamSet::variables(s.phi_plus);
  TensorMap u = ad::backward(meta_loss(in.policy.layout, leaves, in.critic, in.d0), leaves);
  EXPECT_NEAR(meta_alpha_grad(ctx, alpha).grad, -0.01 * ad::dot(u, dec.g_H), 1e-15);
}

TEST(MetaAlphaGrad, MatchesEndToEndFiniteDifference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Instance in(100 + seed, 8, 16);
    MetaContext ctx = in.context();
    const double alpha = 0.02 + 0.09 * static_cast<double>(seed);
    const double analytic = meta_alpha_grad(ctx, alpha).grad;
    const double fd = meta_alpha_fd_oracle(ctx, alpha, 1e-4);
    EXPECT_LE(std::fabs(analytic - fd) / std::max(std::fabs(fd), 1e-8), 1e-4) << seed;
  }
}

TEST(MetaAlphaGrad, ReportedLossMatchesRecomputation) {
  Instance in(7);
  MetaContext ctx = in.context();
  EXPECT_NEAR(meta_alpha_grad(ctx, 0.2).loss, meta_loss_at(ctx, 0.2), 1e-12);
}

TEST(MetaAlphaGrad, LeavesStateUntouched) {
  Instance in(8);
  const auto hp = hash_tensors(in.policy.values), hq = hash_tensors(in.critic.values);
  const auto hv = hash_tensors(in.opt.second);
  const long steps = in.opt.steps;
  MetaContext ctx = in.context();
  meta_alpha_grad(ctx, 0.2);
  meta_alpha_fd_oracle(ctx, 0.2, 1e-4);
  EXPECT_EQ(hash_tensors(in.policy.values), hp);
  EXPECT_EQ(hash_tensors(in.critic.values), hq);
  EXPECT_EQ(hash_tensors(in.opt.second), hv);
  EXPECT_EQ(in.opt.steps, steps);
}

TEST(FdOracle, QuadraticStub) {
  auto f = [](double a) { return (a - 1) * (a - 1); };
  for (double a : {-2.0, 0.0, 0.3, 1.0, 5.0}) {
    EXPECT_NEAR(central_difference(f, a, 1e-4), 2 * (a - 1), 1e-9);
  }
  EXPECT_THROW(central_difference(f, 0.0, 0.0), std::invalid_argument);
}

TEST(FdOracle, ErrorShrinksUnderRefinement) {
  // Smooth test function: FD error is O(h^2) until rounding takes over near 1e-6.
  auto f = [](double a) { return std::exp(std::sin(3 * a)) / (1 + a * a); };
  auto df = [&](double a) {
    return std::exp(std::sin(3 * a)) * (3 * std::cos(3 * a) * (1 + a * a) - 2 * a) / ((1 + a * a) * (1 + a * a));
  };
  double previous = INFINITY;
  for (double h = 1e-2; h >= 1e-4; h /= 2) {
    const double err = std::fabs(central_difference(f, 0.4, h) - df(0.4));
    EXPECT_LT(err, previous) << h;
    previous = err;
  }
  EXPECT_LT(std::fabs(central_difference(f, 0.4, 1e-6) - df(0.4)), 1e-8);
}

TEST(FdOracle, RefinementOnMetaLoss) {
  Instance in(21);
  MetaContext ctx = in.context();
  const double analytic = meta_alpha_grad(ctx, 0.3).grad;
  const double coarse = std::fabs(meta_alpha_fd_oracle(ctx, 0.3, 4e-2) - analytic);
  const double fine = std::fabs(meta_alpha_fd_oracle(ctx, 0.3, 1e-2) - analytic);
  EXPECT_LT(fine, coarse);
}

TEST(Gradcheck, CasesCoverGrid) {
  auto cases = gradcheck_cases(12, 0);
  ASSERT_EQ(cases.size(), 12u);
  std::set<int> widths, batches;
  for (const auto& c : cases) {
    widths.insert(c.width);
    batches.insert(c.batch);
    EXPECT_LE(c.width, 16);
    EXPECT_GT(c.alpha, std::exp(-4.0) - 1e-15);
    EXPECT_LE(c.alpha, 1.0);
  }
  EXPECT_EQ(widths, (std::set<int>{4, 8, 16}));
  EXPECT_EQ(batches, (std::set<int>{4, 16}));
  EXPECT_EQ(gradcheck_cases(12, 0)[5].alpha, cases[5].alpha);
}

TEST(Gradcheck, FixedSeedPasses) {
  for (const auto& c : gradcheck_cases(12, 0)) {
    GradcheckOutcome o = check_metagradient(c);
    EXPECT_LE(o.rel_error, 1e-4) << "seed " << c.seed;
  }
}
