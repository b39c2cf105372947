#include "metasac/networks.hpp"

#include "test_util.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace metasac;
using namespace metasac::nn;
using ad::Shape;
using metasac::testing::fd_gradient;
using metasac::testing::max_rel_error;

namespace {

double scalar_log_prob(double mu, double log_std, double noise, double bound) {
  Matrix m(1, 1), l(1, 1), e(1, 1);
  m << mu;
  l << log_std;
  e << noise;
  return squashed_gaussian(ad::constant(m), ad::constant(l), e, bound).log_prob.item();
}

PolicyParams small_policy(int state_dim, int action_dim, int width, std::uint64_t seed, double bound = 1.0) {
  Rng rng(seed);
  return init_policy({state_dim, action_dim, width, 2, bound}, rng);
}

}  // namespace

TEST(SquashedGaussian, OriginLogProb) {
  // -0.5 ln(2 pi) - ln(1 - tanh(0)^2)
  EXPECT_NEAR(scalar_log_prob(0, 0, 0, 1.0), -0.918939, 1e-6);
  Matrix zero = Matrix::Zero(1, 1);
  EXPECT_EQ(squashed_gaussian(ad::constant(zero), ad::constant(zero), zero, 1.0).action.item(), 0.0);
}

TEST(SquashedGaussian, BoundEntersLogProb) {
  EXPECT_NEAR(scalar_log_prob(0, 0, 0, 0.4), -0.918939 - std::log(0.4), 1e-6);
  EXPECT_NEAR(scalar_log_prob(0, 0, 0, 0.4), -0.002648, 1e-6);
}

TEST(SquashedGaussian, DensityIntegratesToOne) {
  // Integrate exp(log_prob(a)) over (-b, b) in action space. The integrator
  // passes the distance to the nearest endpoint, which lets atanh resolve
  // actions within 1e-300 of the bound.
  Rng rng(42);
  std::uniform_real_distribution<double> mu_d(-2.0, 2.0), ls_d(-2.0, 1.0), b_d(0.2, 3.0);
  boost::math::quadrature::tanh_sinh<double> integrator;
  for (int trial = 0; trial < 20; ++trial) {
    const double mu = mu_d(rng), ls = ls_d(rng), b = b_d(rng);
    auto density = [&](double a, double complement) {
      double u;
      if (complement < 0) {  // near -b: 1 + a/b = -complement/b
        const double d = -complement / b;
        u = 0.5 * std::log(d / (2.0 - d));
      } else if (complement > 0) {  // near +b
        const double d = complement / b;
        u = 0.5 * std::log((2.0 - d) / d);
      } else {
        u = std::atanh(a / b);
      }
      return std::exp(scalar_log_prob(mu, ls, (u - mu) / std::exp(ls), b));
    };
    const double mass = integrator.integrate(density, -b, b);
    EXPECT_NEAR(mass, 1.0, 1e-3) << "mu " << mu << " log_std " << ls << " b " << b;
  }
}

TEST(SquashedGaussian, LogProbFiniteForLargePreSquash) {
  for (double u : {-50.0, -20.0, -10.5, 10.5, 20.0, 50.0}) {
    const double lp = scalar_log_prob(0.0, 0.0, u, 1.0);
    EXPECT_TRUE(std::isfinite(lp)) << u;
    // log(1 - tanh^2 u) ~ log 4 - 2|u| for large |u|
    const double expected = -0.5 * u * u - 0.5 * std::log(2 * std::numbers::pi) - (std::log(4.0) - 2 * std::fabs(u));
    EXPECT_NEAR(lp, expected, 1e-8 * std::fabs(expected));
  }
}

TEST(SquashedGaussian, ActionsStrictlyInsideBound) {
  Rng rng(7);
  for (double b : {0.4, 1.0, 2.0}) {
    Matrix mean = 30.0 * standard_normal(64, 3, rng);
    Matrix noise = 30.0 * standard_normal(64, 3, rng);
    Matrix a = squashed_gaussian(ad::constant(mean), ad::constant(Matrix::Zero(64, 3)), noise, b).action.data();
    EXPECT_LT(a.cwiseAbs().maxCoeff(), b);
  }
}

TEST(SquashedGaussian, NonFiniteHeadsThrow) {
  Matrix m(1, 1), z = Matrix::Zero(1, 1);
  m << std::nan("");
  EXPECT_THROW(squashed_gaussian(ad::constant(m), ad::constant(z), z, 1.0), ad::DomainError);
  m << INFINITY;
  EXPECT_THROW(squashed_gaussian(ad::constant(z), ad::constant(m), z, 1.0), ad::DomainError);
}

TEST(Policy, LayoutAndInitialization) {
  PolicyParams p = small_policy(3, 2, 16, 1);
  EXPECT_EQ(p.values.at("trunk.0.W").rows(), 16);
  EXPECT_EQ(p.values.at("trunk.0.W").cols(), 3);
  EXPECT_EQ(p.values.at("trunk.1.W").cols(), 16);
  EXPECT_EQ(p.values.at("mean.W").rows(), 2);
  EXPECT_EQ(p.values.at("log_std.b").rows(), 2);
  EXPECT_LE(p.values.at("trunk.0.W").cwiseAbs().maxCoeff(), 1.0 / std::sqrt(3.0));
  EXPECT_LE(p.values.at("mean.W").cwiseAbs().maxCoeff(), 1e-2 / std::sqrt(16.0));
}

TEST(Policy, LogStdIsClamped) {
  PolicyParams p = small_policy(2, 1, 4, 3);
  Matrix s = Matrix::Zero(2, 2);
  p.values.at("log_std.b")(0) = 100.0;
  EXPECT_EQ(policy_heads(p.layout, ParamSet::constants(p.values), ad::constant(s)).log_std.data()(0), kLogStdMax);
  p.values.at("log_std.b")(0) = -100.0;
  EXPECT_EQ(policy_heads(p.layout, ParamSet::constants(p.values), ad::constant(s)).log_std.data()(0), kLogStdMin);
}

TEST(Policy, DeterministicAction) {
  PolicyParams p = small_policy(2, 2, 8, 5, 0.4);
  for (auto& [id, m] : p.values)
    if (id.rfind("mean.", 0) == 0) m.setZero();
  Matrix s = Matrix::Random(5, 2);
  EXPECT_TRUE(act_deterministic(p, s).isZero());

  p.values.at("mean.b").setConstant(1e6);
  Matrix sat = act_deterministic(p, s);
  EXPECT_LT(sat.maxCoeff(), 0.4);
  EXPECT_GT(sat.minCoeff(), 0.4 - 1e-12);
}

TEST(Policy, DeterministicEqualsZeroNoiseSample) {
  PolicyParams p = small_policy(3, 2, 8, 9);
  Rng rng(1);
  Matrix s = standard_normal(6, 3, rng);
  const ParamSet c = ParamSet::constants(p.values);
  Matrix det = policy_deterministic(p.layout, c, ad::constant(s)).data();
  Matrix smp = policy_sample(p.layout, c, ad::constant(s), Matrix::Zero(6, 2)).action.data();
  EXPECT_TRUE(det == smp);
}

class PolicySampleGradient : public ::testing::TestWithParam<int> {};

TEST_P(PolicySampleGradient, MatchesFiniteDifference) {
  const int seed = GetParam();
  PolicyParams p = small_policy(3, 2, 8, 100 + seed);
  Rng rng(200 + seed);
  for (auto& [id, m] : p.values) m += 0.3 * standard_normal(m.rows(), m.cols(), rng);  // leave the init regime
  Matrix s = standard_normal(5, 3, rng), noise = standard_normal(5, 2, rng);
  Matrix w = standard_normal(5, 2, rng);
  auto f = [&](const ParamSet& ps) {
    PolicySample out = policy_sample(p.layout, ps, ad::constant(s), noise);
    return ad::mean(out.log_prob) + ad::sum(out.action * ad::constant(w));
  };
  ParamSet vars = ParamSet::variables(p.values);
  TensorMap g = ad::backward(f(vars), vars);
  TensorMap fd = fd_gradient([&](const TensorMap& m) { return f(ParamSet::constants(m)).item(); }, p.values);
  EXPECT_LE(max_rel_error(g, fd), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Random, PolicySampleGradient, ::testing::Range(0, 10));

TEST(Critic, ZeroOutputLayerGivesZeroQ) {
  Rng rng(4);
  CriticParams c = init_critic({3, 2, 8, 2, true}, rng);
  for (const char* id : {"q1.2.W", "q1.2.b", "q2.2.W", "q2.2.b"}) c.values.at(id).setZero();
  Matrix s = standard_normal(4, 3, rng), a = standard_normal(4, 2, rng);
  QPair q = q_values(c.layout, ParamSet::constants(c.values), ad::constant(s), ad::constant(a));
  EXPECT_TRUE(q.q1.data().isZero());
  EXPECT_TRUE(q.q2.data().isZero());
}

TEST(Critic, MinQBelowBothHeads) {
  Rng rng(8);
  CriticParams c = init_critic({3, 2, 16, 2, true}, rng);
  Matrix s = standard_normal(50, 3, rng), a = uniform(50, 2, -1, 1, rng);
  const ParamSet ps = ParamSet::constants(c.values);
  QPair q = q_values(c.layout, ps, ad::constant(s), ad::constant(a));
  Matrix m = min_q(c.layout, ps, ad::constant(s), ad::constant(a)).data();
  EXPECT_TRUE((m.array() <= q.q1.data().array()).all());
  EXPECT_TRUE((m.array() <= q.q2.data().array()).all());
  EXPECT_TRUE((m.array() == q.q1.data().array().min(q.q2.data().array())).all());
}

TEST(Critic, SingleHeadLayout) {
  Rng rng(8);
  CriticParams c = init_critic({3, 2, 16, 2, false}, rng);
  EXPECT_EQ(c.values.count("q2.0.W"), 0u);
  Matrix s = standard_normal(4, 3, rng), a = standard_normal(4, 2, rng);
  const ParamSet ps = ParamSet::constants(c.values);
  EXPECT_TRUE(min_q(c.layout, ps, ad::constant(s), ad::constant(a)).data() ==
              q_values(c.layout, ps, ad::constant(s), ad::constant(a)).q1.data());
}

TEST(Critic, MinQActionGradientMatchesFiniteDifference) {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    CriticParams c = init_critic({3, 2, 8, 2, true}, rng);
    Matrix s = standard_normal(6, 3, rng);
    TensorMap at{{"a", uniform(6, 2, -1, 1, rng)}};
    auto f = [&](const ParamSet& ps) {
      return ad::sum(min_q(c.layout, ParamSet::constants(c.values), ad::constant(s), ps.at("a")));
    };
    ParamSet vars = ParamSet::variables(at);
    TensorMap g = ad::backward(f(vars), vars);
    TensorMap fd = fd_gradient([&](const TensorMap& m) { return f(ParamSet::constants(m)).item(); }, at);
    EXPECT_LE(max_rel_error(g, fd), 1e-5) << seed;
  }
}

TEST(Polyak, Coefficients) {
  TensorMap target{{"w", Matrix::Zero(2, 2)}};
  const TensorMap online{{"w", Matrix::Ones(2, 2)}};

  TensorMap t = target;
  polyak_update(t, online, 0.05);
  EXPECT_DOUBLE_EQ(t.at("w")(1, 1), 0.05);

  t = target;
  polyak_update(t, online, 1.0);
  EXPECT_TRUE(t.at("w") == online.at("w"));

  t = target;
  polyak_update(t, online, 0.0);
  EXPECT_TRUE(t.at("w") == target.at("w"));
}

TEST(Polyak, RejectsMismatch) {
  TensorMap t{{"w", Matrix::Zero(2, 2)}};
  EXPECT_THROW(polyak_update(t, {{"w", Matrix::Zero(2, 3)}}, 0.5), std::invalid_argument);
  EXPECT_THROW(polyak_update(t, {{"v", Matrix::Zero(2, 2)}}, 0.5), std::invalid_argument);
  EXPECT_THROW(polyak_update(t, {{"w", Matrix::Zero(2, 2)}}, 1.5), std::invalid_argument);
}
