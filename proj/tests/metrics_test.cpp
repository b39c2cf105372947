#include "metasac/metrics.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace metasac;
using namespace metasac::metrics;

namespace {

const double kLog2PiE = std::log(2.0 * std::numbers::pi * std::numbers::e);

nn::PolicyParams unit_sigma_policy(int sd, int ad, Rng& rng) {
  nn::PolicyParams p = nn::init_policy({sd, ad, 8, 2, 1.0}, rng);
  p.values.at("log_std.W").setZero();
  p.values.at("log_std.b").setZero();
  return p;
}

// psi(N) - psi(k) through harmonic numbers, independent of the library's digamma.
double digamma_difference(int n, int k) {
  double s = 0.0;
  for (int j = k; j < n; ++j) s += 1.0 / j;
  return s;
}

}  // namespace

TEST(EntropyMode, Parse) {
  EXPECT_EQ(parse_entropy_mode("gaussian"), EntropyMode::Gaussian);
  EXPECT_EQ(parse_entropy_mode("mc"), EntropyMode::MonteCarlo);
  EXPECT_THROW(parse_entropy_mode("kde"), std::invalid_argument);
}

TEST(TrajectoryEntropy, UnitSigmaGaussian) {
  Rng rng(1);
  nn::PolicyParams p = unit_sigma_policy(3, 2, rng);
  Matrix s = standard_normal(40, 3, rng);
  EXPECT_NEAR(trajectory_entropy_rate(s, p, EntropyMode::Gaussian, rng), kLog2PiE, 1e-14);
  EXPECT_NEAR(kLog2PiE, 2.837877, 1e-6);
}

TEST(TrajectoryEntropy, GaussianModeIsMeanOfClosedForm) {
  Rng rng(2);
  nn::PolicyParams p = nn::init_policy({3, 2, 8, 2, 1.0}, rng);
  for (auto& [id, m] : p.values) m += 0.5 * standard_normal(m.rows(), m.cols(), rng);
  Matrix s = standard_normal(25, 3, rng);
  // Closed form from the log-std head, evaluated here with plain Eigen.
  Matrix per = gaussian_entropies(s, p);
  ASSERT_EQ(per.rows(), 25);
  double expected = 0.0;
  for (int j = 0; j < 25; ++j) {
    Eigen::VectorXd x = s.row(j).transpose();
    for (int l = 0; l < 2; ++l) {
      x = (p.values.at("trunk." + std::to_string(l) + ".W") * x + p.values.at("trunk." + std::to_string(l) + ".b"))
              .cwiseMax(0.0);
    }
    Eigen::VectorXd log_std = p.values.at("log_std.W") * x + p.values.at("log_std.b");
    double hj = 0.0;
    for (int d = 0; d < 2; ++d) hj += 0.5 * kLog2PiE + std::clamp(log_std(d), nn::kLogStdMin, nn::kLogStdMax);
    EXPECT_NEAR(per(j), hj, 1e-12);
    expected += hj;
  }
  EXPECT_NEAR(trajectory_entropy_rate(s, p, EntropyMode::Gaussian, rng), expected / 25, 1e-12);
}

TEST(TrajectoryEntropy, IdenticalStatesGiveSingleStateValue) {
  Rng rng(3);
  nn::PolicyParams p = nn::init_policy({3, 2, 8, 2, 1.0}, rng);
  Matrix one = standard_normal(1, 3, rng);
  Matrix many = one.replicate(30, 1);
  EXPECT_NEAR(trajectory_entropy_rate(many, p, EntropyMode::Gaussian, rng),
              trajectory_entropy_rate(one, p, EntropyMode::Gaussian, rng), 1e-14);
}

TEST(TrajectoryEntropy, EmptyThrows) {
  Rng rng(4);
  nn::PolicyParams p = nn::init_policy({3, 2, 8, 2, 1.0}, rng);
  EXPECT_THROW(trajectory_entropy_rate(Matrix(0, 3), p, EntropyMode::Gaussian, rng), std::invalid_argument);
  EXPECT_THROW(trajectory_entropy_rate(Matrix(0, 3), p, EntropyMode::MonteCarlo, rng), std::invalid_argument);
}

TEST(TrajectoryEntropy, MonteCarloMatchesSquashedGaussianEntropy) {
  Rng rng(5);
  nn::PolicyParams p = unit_sigma_policy(3, 1, rng);
  p.values.at("mean.W").setZero();
  p.values.at("mean.b").setZero();
  // H(tanh Z) = H(Z) + E[log(1 - tanh(Z)^2)] for Z ~ N(0, 1), by quadrature.
  auto integrand = [](double z) {
    const double a = std::fabs(z);
    return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi) *
           (2 * std::numbers::ln2 - 2 * a - 2 * std::log1p(std::exp(-2 * a)));
  };
  boost::math::quadrature::tanh_sinh<double> q;
  const double expected = 0.5 * kLog2PiE + q.integrate(integrand, -40.0, 0.0) + q.integrate(integrand, 0.0, 40.0);
  EXPECT_NEAR(expected, 0.669804, 1e-6);

  Matrix s = standard_normal(2000, 3, rng);
  const double mc = trajectory_entropy_rate(s, p, EntropyMode::MonteCarlo, rng);
  // 16000 draws of -log pi with unit-order spread: standard error below 0.01.
  EXPECT_NEAR(mc, expected, 0.04);
  EXPECT_LT(mc, trajectory_entropy_rate(s, p, EntropyMode::Gaussian, rng));
}

TEST(Knn, UniformSquare) {
  Rng rng(11);
  Matrix x = uniform(50000, 2, 0.0, 1.0, rng);
  EXPECT_NEAR(knn_entropy(x, 3), 0.0, 0.05);
}

TEST(Knn, StandardNormal) {
  Rng rng(12);
  Matrix x = standard_normal(50000, 2, rng);
  EXPECT_NEAR(knn_entropy(x, 3), 2.837877, 0.05);
}

TEST(Knn, ScalingLaw) {
  Rng rng(13);
  Matrix x = standard_normal(2000, 3, rng);
  const double base = knn_entropy(x);
  for (double c : {0.01, 0.5, 2.0, 1000.0}) {
    EXPECT_NEAR(knn_entropy(c * x) - base, 3 * std::log(c), 1e-9) << c;
  }
}

TEST(Knn, TranslationInvariance) {
  Rng rng(14);
  Matrix x = standard_normal(2000, 2, rng);
  Eigen::RowVector2d shift(3.5, -1.25);
  EXPECT_NEAR(knn_entropy(x.rowwise() + shift), knn_entropy(x), 1e-9);
}

TEST(Knn, MatchesIndependentFormula) {
  Rng rng(15);
  for (int d = 1; d <= 3; ++d) {
    Matrix x = standard_normal(300, d, rng);
    Eigen::VectorXd r = kth_neighbor_distances_brute(x, 3);
    const double log_cd = d == 1 ? std::log(2.0) : d == 2 ? std::log(std::numbers::pi)
                                                          : std::log(4.0 * std::numbers::pi / 3.0);
    EXPECT_NEAR(log_unit_ball_volume(d), log_cd, 1e-14);
    const double expected = digamma_difference(300, 3) + log_cd + d * r.array().log().mean();
    EXPECT_NEAR(knn_entropy(x, 3), expected, 1e-10) << d;
  }
}

TEST(Knn, SweepMatchesBruteForce) {
  Rng rng(16);
  for (int d : {1, 2, 4}) {
    for (int k : {1, 3, 5}) {
      Matrix x = standard_normal(500, d, rng);
      EXPECT_TRUE(kth_neighbor_distances(x, k) == kth_neighbor_distances_brute(x, k)) << d << " " << k;
    }
  }
  // Ties on the sweep coordinate.
  Matrix grid(36, 2);
  for (int i = 0; i < 36; ++i) grid.row(i) << i / 6, i % 6;
  EXPECT_TRUE(kth_neighbor_distances(grid, 3) == kth_neighbor_distances_brute(grid, 3));
}

TEST(Knn, DuplicatesAreFloored) {
  Matrix x = Matrix::Zero(10, 2);
  Eigen::VectorXd r = kth_neighbor_distances(x, 3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(r(i), 1e-12);
  EXPECT_TRUE(std::isfinite(knn_entropy(x, 3)));
}

TEST(Knn, Preconditions) {
  Rng rng(17);
  EXPECT_THROW(knn_entropy(standard_normal(3, 2, rng), 3), std::invalid_argument);
  EXPECT_NO_THROW(knn_entropy(standard_normal(4, 2, rng), 3));
  EXPECT_THROW(knn_entropy(standard_normal(10, 2, rng), 0), std::invalid_argument);
  Matrix bad = standard_normal(10, 2, rng);
  bad(4, 1) = std::nan("");
  EXPECT_THROW(knn_entropy(bad, 3), std::domain_error);
}
