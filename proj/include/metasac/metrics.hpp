#pragma once

#include "metasac/networks.hpp"
#include "metasac/random.hpp"

#include <Eigen/Dense>

#include <string>

namespace metasac::metrics {

using Matrix = Eigen::MatrixXd;

enum class EntropyMode { Gaussian, MonteCarlo };

EntropyMode parse_entropy_mode(const std::string& name);  // "gaussian" | "mc"

/// Number of policy samples per state in MonteCarlo mode.
inline constexpr int kMonteCarloSamples = 8;

/// Time-averaged action entropy over visited states (one state per row).
///   Gaussian:   mean_j sum_d 0.5 ln(2 pi e) + log sigma_d(s_j)   (pre-squash)
///   MonteCarlo: mean_j mean_k -log pi(a_k | s_j)                  (squashed density)
/// `rng` is only consumed in MonteCarlo mode.
double trajectory_entropy_rate(const Matrix& states, const nn::PolicyParams& policy, EntropyMode mode, Rng& rng);

/// Per-state closed-form Gaussian entropies, [N, 1].
Matrix gaussian_entropies(const Matrix& states, const nn::PolicyParams& policy);

/// Distance from each row to its k-th nearest other row, floored at 1e-12.
Eigen::VectorXd kth_neighbor_distances(const Matrix& samples, int k);
/// Reference O(N^2) version of the above.
Eigen::VectorXd kth_neighbor_distances_brute(const Matrix& samples, int k);

/// Kozachenko-Leonenko estimate psi(N) - psi(k) + ln c_d + (d / N) sum_i ln r_ik, in nats.
double knn_entropy(const Matrix& samples, int k = 3);

/// Volume of the d-dimensional unit ball, in log space.
double log_unit_ball_volume(int d);

}  // namespace metasac::metrics
