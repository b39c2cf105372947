#include "metasac/metrics.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace metasac::metrics {

EntropyMode parse_entropy_mode(const std::string& name) {
  if (name == "gaussian") return EntropyMode::Gaussian;
  if (name == "mc") return EntropyMode::MonteCarlo;
  throw std::invalid_argument("unknown entropy mode '" + name + "' (expected gaussian or mc)");
}

Matrix gaussian_entropies(const Matrix& states, const nn::PolicyParams& policy) {
  nn::PolicyHeads heads = nn::policy_heads(policy.layout, ad::ParamSet::constants(policy.values),
                                           ad::constant(states));
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  const Matrix& log_std = heads.log_std.data();
  return (log_std.rowwise().sum().array() + per_dim * static_cast<double>(log_std.cols())).matrix();
}

double trajectory_entropy_rate(const Matrix& states, const nn::PolicyParams& policy, EntropyMode mode, Rng& rng) {
  if (states.rows() == 0) throw std::invalid_argument("trajectory_entropy_rate: no states");
  if (mode == EntropyMode::Gaussian) return gaussian_entropies(states, policy).mean();

  const Eigen::Index n = states.rows();
  Matrix tiled(n * kMonteCarloSamples, states.cols());
  for (int k = 0; k < kMonteCarloSamples; ++k) tiled.middleRows(k * n, n) = states;
  Matrix noise = standard_normal(tiled.rows(), policy.layout.action_dim, rng);
  nn::PolicySample s = nn::policy_sample(policy.layout, ad::ParamSet::constants(policy.values),
                                         ad::constant(tiled), noise);
  return -s.log_prob.data().mean();
}

namespace {

constexpr double kMinDistance = 1e-12;

void check_knn_input(const Matrix& samples, int k) {
  if (k < 1) throw std::invalid_argument("knn: k must be at least 1");
  if (samples.rows() <= k) {
    throw std::invalid_argument("knn: need more than k=" + std::to_string(k) + " samples, got " +
                                std::to_string(samples.rows()));
  }
  if (samples.cols() < 1) throw std::invalid_argument("knn: samples have no dimensions");
  if (!samples.allFinite()) throw std::domain_error("knn: non-finite sample");
}

}  // namespace

Eigen::VectorXd kth_neighbor_distances_brute(const Matrix& samples, int k) {
  check_knn_input(samples, k);
  const Eigen::Index n = samples.rows();
  Eigen::VectorXd out(n);
  std::vector<double> d2(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d2[m++] = (samples.row(i) - samples.row(j)).squaredNorm();
    }
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    out(i) = std::max(std::sqrt(d2[static_cast<std::size_t>(k - 1)]), kMinDistance);
  }
  return out;
}

Eigen::VectorXd kth_neighbor_distances(const Matrix& samples, int k) {
  check_knn_input(samples, k);
  const Eigen::Index n = samples.rows();
  // Sweep outward along the first coordinate; a candidate further away along
  // that axis than the current k-th distance cannot improve it.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return samples(a, 0) < samples(b, 0) || (samples(a, 0) == samples(b, 0) && a < b);
  });
  Eigen::VectorXd out(n);
  std::priority_queue<double> best;  // squared distances, max on top
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    const Eigen::Index i = order[static_cast<std::size_t>(pos)];
    best = {};
    auto consider = [&](Eigen::Index j) {
      const double d2 = (samples.row(i) - samples.row(j)).squaredNorm();
      if (static_cast<int>(best.size()) < k) {
        best.push(d2);
      } else if (d2 < best.top()) {
        best.pop();
        best.push(d2);
      }
    };
    Eigen::Index lo = pos - 1, hi = pos + 1;
    while (lo >= 0 || hi < n) {
      const double dlo = lo >= 0 ? samples(i, 0) - samples(order[static_cast<std::size_t>(lo)], 0) : INFINITY;
      const double dhi = hi < n ? samples(order[static_cast<std::size_t>(hi)], 0) - samples(i, 0) : INFINITY;
      const double axis = std::min(dlo, dhi);
      if (static_cast<int>(best.size()) == k && axis * axis > best.top()) break;
      if (dlo <= dhi) {
        consider(order[static_cast<std::size_t>(lo--)]);
      } else {
        consider(order[static_cast<std::size_t>(hi++)]);
      }
    }
    out(i) = std::max(std::sqrt(best.top()), kMinDistance);
  }
  return out;
}

double log_unit_ball_volume(int d) {
  if (d < 1) throw std::invalid_argument("unit ball dimension must be positive");
  return 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0);
}

double knn_entropy(const Matrix& samples, int k) {
  const Eigen::VectorXd r = kth_neighbor_distances(samples, k);
  const double n = static_cast<double>(samples.rows());
  const int d = static_cast<int>(samples.cols());
  return boost::math::digamma(n) - boost::math::digamma(static_cast<double>(k)) + log_unit_ball_volume(d) +
         d * r.array().log().mean();
}

}  // namespace metasac::metrics
