#pragma once

#include "metasac/envs.hpp"
#include "metasac/random.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace metasac::replay {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;  // true termination only; horizon truncation bootstraps
};

/// Column-stacked minibatch, one row per sampled transition.
struct Batch {
  Matrix states;       // [B, state_dim]
  Matrix actions;      // [B, action_dim]
  Matrix rewards;      // [B, 1]
  Matrix next_states;  // [B, state_dim]
  Matrix terminals;    // [B, 1], 1.0 for true termination
  std::vector<Eigen::Index> indices;

  Eigen::Index size() const { return states.rows(); }
};

/// Ring buffer of transitions; oldest entries are overwritten first.
class ReplayBuffer {
 public:
  static constexpr Eigen::Index kDefaultCapacity = 1'000'000;

  ReplayBuffer(int state_dim, int action_dim, Eigen::Index capacity = kDefaultCapacity);

  void push(const Transition& t);
  /// B indices uniformly with replacement.
  Batch sample(Eigen::Index batch_size, Rng& rng) const;
  Transition get(Eigen::Index i) const;
  Batch gather(const std::vector<Eigen::Index>& indices) const;

  /// The `count` most recently pushed states, oldest first.
  Matrix recent_states(Eigen::Index count) const;

  Eigen::Index size() const { return size_; }
  Eigen::Index capacity() const { return capacity_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

 private:
  int state_dim_;
  int action_dim_;
  Eigen::Index capacity_;
  Eigen::Index cursor_ = 0;
  Eigen::Index size_ = 0;
  Matrix states_, actions_, rewards_, next_states_, terminals_;
};

/// Independent minibatch for the critic and actor updates when `resample` is
/// on; otherwise the batch already drawn for the temperature update.
Batch resample_fresh(const ReplayBuffer& buffer, const Batch& previous, bool resample, Rng& rng);

/// Frozen collection of environment initial states, filled exactly once.
class InitialStateBuffer {
 public:
  static constexpr Eigen::Index kDefaultSize = 256;

  InitialStateBuffer() = default;

  void fill(const env::Environment& env, Eigen::Index count, Rng& rng);
  bool filled() const { return filled_; }
  const Matrix& states() const;
  Eigen::Index size() const { return states_.rows(); }
  /// FNV-1a over the raw bytes; stable while the buffer is unchanged.
  std::uint64_t content_hash() const;

 private:
  Matrix states_;
  bool filled_ = false;
};

}  // namespace metasac::replay
