#include "metasac/buffers.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace metasac::replay {

ReplayBuffer::ReplayBuffer(int state_dim, int action_dim, Eigen::Index capacity)
    : state_dim_(state_dim), action_dim_(action_dim), capacity_(capacity) {
  if (state_dim <= 0 || action_dim <= 0 || capacity <= 0) {
    throw std::invalid_argument("replay buffer dimensions and capacity must be positive");
  }
  // Storage grows with the buffer so a 1e6 capacity costs nothing until used.
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
      t.action.size() != action_dim_) {
    throw std::invalid_argument("transition dims (" + std::to_string(t.state.size()) + ", " +
                                std::to_string(t.action.size()) + ", " +
                                std::to_string(t.next_state.size()) + ") do not match buffer (" +
                                std::to_string(state_dim_) + ", " + std::to_string(action_dim_) + ")");
  }
  if (cursor_ >= states_.rows()) {
    const Eigen::Index grown = std::min(capacity_, std::max<Eigen::Index>(1024, 2 * states_.rows()));
    states_.conservativeResize(grown, state_dim_);
    actions_.conservativeResize(grown, action_dim_);
    rewards_.conservativeResize(grown, 1);
    next_states_.conservativeResize(grown, state_dim_);
    terminals_.conservativeResize(grown, 1);
  }
  states_.row(cursor_) = t.state.transpose();
  actions_.row(cursor_) = t.action.transpose();
  rewards_(cursor_, 0) = t.reward;
  next_states_.row(cursor_) = t.next_state.transpose();
  terminals_(cursor_, 0) = t.terminal ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::get(Eigen::Index i) const {
  if (i < 0 || i >= size_) throw std::out_of_range("replay index out of range");
  return {states_.row(i).transpose(), actions_.row(i).transpose(), rewards_(i, 0),
          next_states_.row(i).transpose(), terminals_(i, 0) != 0.0};
}

Batch ReplayBuffer::gather(const std::vector<Eigen::Index>& indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.states.resize(n, state_dim_);
  b.actions.resize(n, action_dim_);
  b.rewards.resize(n, 1);
  b.next_states.resize(n, state_dim_);
  b.terminals.resize(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = indices[static_cast<std::size_t>(k)];
    if (i < 0 || i >= size_) throw std::out_of_range("replay index out of range");
    b.states.row(k) = states_.row(i);
    b.actions.row(k) = actions_.row(i);
    b.rewards(k, 0) = rewards_(i, 0);
    b.next_states.row(k) = next_states_.row(i);
    b.terminals(k, 0) = terminals_(i, 0);
  }
  b.indices = indices;
  return b;
}

Batch ReplayBuffer::sample(Eigen::Index batch_size, Rng& rng) const {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (size_ < batch_size) {
    throw std::length_error("cannot sample " + std::to_string(batch_size) + " transitions from a buffer of " +
                            std::to_string(size_));
  }
  std::uniform_int_distribution<Eigen::Index> pick(0, size_ - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = pick(rng);
  return gather(idx);
}

Matrix ReplayBuffer::recent_states(Eigen::Index count) const {
  count = std::min(count, size_);
  Matrix out(count, state_dim_);
  for (Eigen::Index k = 0; k < count; ++k) {
    Eigen::Index i = (cursor_ - count + k) % capacity_;
    if (i < 0) i += capacity_;
    out.row(k) = states_.row(i);
  }
  return out;
}

Batch resample_fresh(const ReplayBuffer& buffer, const Batch& previous, bool resample, Rng& rng) {
  if (!resample) return previous;
  return buffer.sample(previous.size(), rng);
}

void InitialStateBuffer::fill(const env::Environment& env, Eigen::Index count, Rng& rng) {
  if (filled_) throw std::logic_error("initial-state buffer is already filled");
  if (count <= 0) throw std::invalid_argument("initial-state buffer size must be positive");
  states_.resize(count, env.spec().state_dim);
  for (Eigen::Index i = 0; i < count; ++i) {
    states_.row(i) = env.observe(env.reset(rng)).transpose();
  }
  filled_ = true;
}

const Matrix& InitialStateBuffer::states() const {
  if (!filled_) throw std::logic_error("initial-state buffer is empty");
  return states_;
}

std::uint64_t InitialStateBuffer::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(states_.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(states_.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace metasac::replay
