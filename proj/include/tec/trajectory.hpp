#pragma once

// Rollout storage and contrastive batch sampling from the discounted future-state
// distribution of stored trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tec/error.hpp"
#include "tec/nn.hpp"

namespace tec {

struct Transition {
  SparseVector state;
  Vector action;
  SparseVector next_state;
  std::size_t step_index = 0;
  bool terminal = false;
  // Tabular ids (-1 when the environment has none).
  long state_id = -1;
  long action_id = -1;
  long next_state_id = -1;
};

/// Ordered transitions with contiguous step indices starting at 0.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<Transition> transitions) : transitions_(std::move(transitions)) {}

  void push_back(Transition t) { transitions_.push_back(std::move(t)); }

  /// Horizon H: number of transitions. Observations are indexed 0..H.
  [[nodiscard]] std::size_t horizon() const { return transitions_.size(); }
  [[nodiscard]] bool empty() const { return transitions_.empty(); }
  [[nodiscard]] const Transition& operator[](std::size_t t) const { return transitions_[t]; }
  [[nodiscard]] const std::vector<Transition>& transitions() const { return transitions_; }

  [[nodiscard]] const SparseVector& observation(std::size_t i) const {
    return i < transitions_.size() ? transitions_[i].state : transitions_.back().next_state;
  }
  [[nodiscard]] long observation_id(std::size_t i) const {
    return i < transitions_.size() ? transitions_[i].state_id : transitions_.back().next_state_id;
  }

  void validate() const {
    if (transitions_.empty()) throw ConfigError("trajectory is empty");
    for (std::size_t t = 0; t < transitions_.size(); ++t) {
      if (transitions_[t].step_index != t) {
        throw ConfigError("trajectory step indices must be contiguous from 0 (index " + std::to_string(t) + ")");
      }
    }
  }

 private:
  std::vector<Transition> transitions_;
};

/// Bounded FIFO of trajectories; the oldest is evicted first.
class TrajectoryBuffer {
 public:
  explicit TrajectoryBuffer(std::size_t capacity = 10'000) : capacity_(capacity) {
    detail::require(capacity > 0, "buffer capacity must be positive");
  }

  void append(Trajectory trajectory) {
    trajectory.validate();
    total_transitions_ += trajectory.horizon();
    trajectories_.push_back(std::move(trajectory));
    ids_.push_back(next_id_++);
    while (trajectories_.size() > capacity_) {
      total_transitions_ -= trajectories_.front().horizon();
      trajectories_.pop_front();
      ids_.pop_front();
    }
    cumulative_dirty_ = true;
  }

  [[nodiscard]] std::size_t size() const { return trajectories_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool empty() const { return trajectories_.empty(); }
  [[nodiscard]] std::size_t transition_count() const { return total_transitions_; }
  [[nodiscard]] const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  [[nodiscard]] std::uint64_t id(std::size_t i) const { return ids_[i]; }
  [[nodiscard]] const std::deque<Trajectory>& trajectories() const { return trajectories_; }

  /// Maps a global anchor index in [0, transition_count) to (trajectory slot, timestep).
  [[nodiscard]] std::pair<std::size_t, std::size_t> locate(std::size_t anchor) const {
    refresh_cumulative();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), anchor);
    const auto slot = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
    const std::size_t before = slot == 0 ? 0 : cumulative_[slot - 1];
    return {slot, anchor - before};
  }

 private:
  void refresh_cumulative() const {
    if (!cumulative_dirty_) return;
    cumulative_.resize(trajectories_.size());
    std::size_t running = 0;
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      running += trajectories_[i].horizon();
      cumulative_[i] = running;
    }
    cumulative_dirty_ = false;
  }

  std::size_t capacity_;
  std::deque<Trajectory> trajectories_;
  std::deque<std::uint64_t> ids_;
  std::uint64_t next_id_ = 0;
  std::size_t total_transitions_ = 0;
  mutable std::vector<std::size_t> cumulative_;
  mutable bool cumulative_dirty_ = true;
};

enum class OffsetStrategy { geometric, uniform, gamma_schedule };

struct SamplerConfig {
  double gamma_cl = 0.99;
  OffsetStrategy strategy = OffsetStrategy::geometric;
  double schedule_start = 0.9;
  double schedule_end = 0.99;
  bool include_zero_offset = true;

  void validate() const {
    detail::require(gamma_cl >= 0.0 && gamma_cl < 1.0, "gamma_cl must be in [0, 1)");
    detail::require(schedule_start >= 0.0 && schedule_start < 1.0 && schedule_end >= 0.0 && schedule_end < 1.0,
                    "schedule gammas must be in [0, 1)");
    detail::require(schedule_start <= schedule_end, "schedule start must not exceed schedule end");
  }
};

/// Discount in effect at training progress in [0, 1]. Linear in progress for the schedule.
inline double effective_gamma(const SamplerConfig& config, double progress = 0.0) {
  if (config.strategy != OffsetStrategy::gamma_schedule) return config.gamma_cl;
  const double p = std::clamp(progress, 0.0, 1.0);
  return config.schedule_start + (config.schedule_end - config.schedule_start) * p;
}

/// Probability of offset k (0-based) under the geometric pmf truncated to {0, ..., remaining-1}.
inline double truncated_geometric_pmf(double gamma, std::size_t remaining, std::size_t k) {
  if (k >= remaining) return 0.0;
  if (gamma == 0.0) return k == 0 ? 1.0 : 0.0;
  const double norm = (1.0 - std::pow(gamma, static_cast<double>(remaining))) / (1.0 - gamma);
  return std::pow(gamma, static_cast<double>(k)) / norm;
}

/// Draws an offset. `remaining` counts the candidate future positions. The result lies in
/// {0, ..., remaining-1}, shifted by one when zero offsets are excluded.
inline std::size_t sample_offset(const SamplerConfig& config, std::size_t remaining, Rng& rng,
                                 double progress = 0.0) {
  if (remaining == 0) throw ContractViolation("sample_offset: no future positions remain");
  const std::size_t shift = config.include_zero_offset ? 0 : 1;
  if (remaining == 1) return shift;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (config.strategy == OffsetStrategy::uniform) {
    std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
    return pick(rng) + shift;
  }
  const double gamma = effective_gamma(config, progress);
  if (gamma == 0.0) return shift;
  // Inverse CDF: P(D <= k) = (1 - g^(k+1)) / (1 - g^R).
  const double u = unit(rng);
  const double mass = 1.0 - std::pow(gamma, static_cast<double>(remaining));
  const double k = std::floor(std::log1p(-u * mass) / std::log(gamma));
  const auto delta = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(remaining - 1)));
  return delta + shift;
}

struct ContrastiveBatch {
  std::vector<SparseVector> anchor_states;
  std::vector<Vector> anchor_actions;
  std::vector<SparseVector> futures;
  std::vector<std::uint64_t> trajectory_ids;
  std::vector<std::size_t> anchor_steps;
  std::vector<std::size_t> future_steps;
  std::vector<long> anchor_state_ids;
  std::vector<long> anchor_action_ids;
  std::vector<long> future_state_ids;
  bool with_replacement = false;

  [[nodiscard]] std::size_t size() const { return anchor_states.size(); }
};

/// Number of candidate future positions after anchor t in a trajectory of horizon H.
inline std::size_t future_positions(const SamplerConfig& config, std::size_t horizon, std::size_t t) {
  return config.include_zero_offset ? horizon - t + 1 : horizon - t;
}

/// Samples K anchors uniformly over stored (trajectory, timestep) pairs, in groups of
/// `repetition_factor` anchors sharing a trajectory, each paired with a future state of
/// the same trajectory at a sampled offset.
inline ContrastiveBatch sample_batch(const TrajectoryBuffer& buffer, std::size_t batch_size,
                                     std::size_t repetition_factor, const SamplerConfig& config, Rng& rng,
                                     double progress = 0.0) {
  if (buffer.empty()) throw ContractViolation("sample_batch: buffer is empty");
  detail::require(batch_size > 0, "sample_batch: batch size must be positive");
  detail::require(repetition_factor > 0, "sample_batch: repetition factor must be positive");
  const std::size_t r = std::min(repetition_factor, batch_size);
  const std::size_t groups = (batch_size + r - 1) / r;

  ContrastiveBatch batch;
  batch.with_replacement = batch_size > buffer.transition_count() || groups > buffer.size();

  // Trajectory choice: length-weighted, without replacement while distinct trajectories remain.
  std::vector<double> weights(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    weights[i] = static_cast<double>(buffer[i].horizon());
  }
  std::vector<double> live = weights;

  auto push_anchor = [&](std::size_t slot, std::size_t t) {
    const Trajectory& traj = buffer[slot];
    const std::size_t remaining = future_positions(config, traj.horizon(), t);
    const std::size_t delta = sample_offset(config, remaining, rng, progress);
    const std::size_t f = t + delta;
    const Transition& tr = traj[t];
    batch.anchor_states.push_back(tr.state);
    batch.anchor_actions.push_back(tr.action);
    batch.futures.push_back(traj.observation(f));
    batch.trajectory_ids.push_back(buffer.id(slot));
    batch.anchor_steps.push_back(t);
    batch.future_steps.push_back(f);
    batch.anchor_state_ids.push_back(tr.state_id);
    batch.anchor_action_ids.push_back(tr.action_id);
    batch.future_state_ids.push_back(traj.observation_id(f));
  };

  for (std::size_t g = 0; g < groups && batch.size() < batch_size; ++g) {
    if (std::all_of(live.begin(), live.end(), [](double w) { return w == 0.0; })) live = weights;
    std::discrete_distribution<std::size_t> pick_traj(live.begin(), live.end());
    const std::size_t slot = pick_traj(rng);
    live[slot] = 0.0;
    std::uniform_int_distribution<std::size_t> pick_t(0, buffer[slot].horizon() - 1);
    for (std::size_t k = 0; k < r && batch.size() < batch_size; ++k) push_anchor(slot, pick_t(rng));
  }
  return batch;
}

/// Future-state mass contributed by one trajectory: for every anchor t, the sampler's
/// offset pmf spread over the stored observations from t on. Entries are (state id, mass);
/// ids repeat. Needs tabular ids.
inline std::vector<std::pair<long, double>> trajectory_future_mass(const Trajectory& traj, const SamplerConfig& config,
                                                                   double progress = 0.0) {
  std::vector<std::pair<long, double>> out;
  const std::size_t h = traj.horizon();
  const std::size_t shift = config.include_zero_offset ? 0 : 1;
  const double gamma = effective_gamma(config, progress);
  for (std::size_t t = 0; t < h; ++t) {
    const std::size_t remaining = future_positions(config, h, t);
    for (std::size_t k = 0; k < remaining; ++k) {
      const double p = config.strategy == OffsetStrategy::uniform ? 1.0 / static_cast<double>(remaining)
                                                                  : truncated_geometric_pmf(gamma, remaining, k);
      const long id = traj.observation_id(t + k + shift);
      if (id < 0) throw ContractViolation("trajectory_future_mass: trajectory has no tabular ids");
      if (p > 0.0) out.emplace_back(id, p);
    }
  }
  return out;
}

/// Marginal of the future states the sampler draws from the buffer, (1/N) sum over the N
/// stored anchors of their truncated future pmfs.
inline Vector empirical_future_marginal(const TrajectoryBuffer& buffer, std::size_t n_states,
                                        const SamplerConfig& config, double progress = 0.0) {
  Vector m = Vector::Zero(static_cast<Eigen::Index>(n_states));
  if (buffer.transition_count() == 0) throw ContractViolation("empirical_future_marginal: buffer is empty");
  for (const auto& traj : buffer.trajectories()) {
    for (const auto& [id, p] : trajectory_future_mass(traj, config, progress)) {
      detail::require(id < static_cast<long>(n_states), "empirical_future_marginal: state id out of range");
      m[id] += p;
    }
  }
  return m / static_cast<double>(buffer.transition_count());
}

/// CSV dump: traj_id, t, s..., a..., s_next..., done.
inline void write_trajectories_csv(std::ostream& out, const TrajectoryBuffer& buffer) {
  if (buffer.empty()) return;
  const auto& first = buffer[0][0];
  const auto sd = first.state.size();
  const auto ad = first.action.size();
  out << "traj_id,t";
  for (Eigen::Index i = 0; i < sd; ++i) out << ",s" << i;
  for (Eigen::Index i = 0; i < ad; ++i) out << ",a" << i;
  for (Eigen::Index i = 0; i < sd; ++i) out << ",s_next" << i;
  out << ",done\n";
  out.precision(17);
  for (std::size_t k = 0; k < buffer.size(); ++k) {
    for (const auto& tr : buffer[k].transitions()) {
      out << buffer.id(k) << ',' << tr.step_index;
      const Vector s = to_dense(tr.state);
      const Vector n = to_dense(tr.next_state);
      for (Eigen::Index i = 0; i < sd; ++i) out << ',' << s[i];
      for (Eigen::Index i = 0; i < ad; ++i) out << ',' << tr.action[i];
      for (Eigen::Index i = 0; i < sd; ++i) out << ',' << n[i];
      out << ',' << (tr.terminal ? 1 : 0) << '\n';
    }
  }
}

}  // namespace tec
