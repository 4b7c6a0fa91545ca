#pragma once

// Policies, the policy-gradient update and the training loop: roll out, store, update the
// representations, relabel intrinsic rewards with the current snapshot, update the policy.

#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tec/contrastive.hpp"
#include "tec/environments.hpp"
#include "tec/error.hpp"
#include "tec/format.hpp"
#include "tec/nn.hpp"
#include "tec/oracle.hpp"
#include "tec/reward.hpp"
#include "tec/trajectory.hpp"

namespace tec {

enum class PolicyKind { TabularSoftmax, MlpCategorical, MlpGaussian };

class Policy {
 public:
  Policy() = default;

  static Policy tabular(std::size_t n_states, std::size_t n_actions) {
    Policy p;
    p.kind_ = PolicyKind::TabularSoftmax;
    p.logits = Matrix::Zero(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
    return p;
  }

  static Policy categorical(std::size_t obs_dim, std::size_t n_actions, const std::vector<std::size_t>& hidden,
                            Rng& rng) {
    Policy p;
    p.kind_ = PolicyKind::MlpCategorical;
    p.net = make_net(obs_dim, n_actions, hidden, rng);
    return p;
  }

  static Policy gaussian(std::size_t obs_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden, Rng& rng,
                         double initial_log_std = -0.5) {
    Policy p;
    p.kind_ = PolicyKind::MlpGaussian;
    p.net = make_net(obs_dim, action_dim, hidden, rng);
    p.log_std = Vector::Constant(static_cast<Eigen::Index>(action_dim), initial_log_std);
    return p;
  }

  [[nodiscard]] PolicyKind kind() const { return kind_; }
  [[nodiscard]] bool discrete() const { return kind_ != PolicyKind::MlpGaussian; }
  [[nodiscard]] std::size_t action_dim() const {
    return kind_ == PolicyKind::TabularSoftmax ? static_cast<std::size_t>(logits.cols()) : net.output_dim();
  }

  /// Logits for categorical policies, the mean for the Gaussian one.
  [[nodiscard]] Vector head(const SparseVector& obs, long state_id, ForwardCache* cache = nullptr) const {
    if (kind_ == PolicyKind::TabularSoftmax) {
      detail::require(state_id >= 0 && state_id < logits.rows(), "tabular policy needs a valid state id");
      return logits.row(state_id).transpose();
    }
    return net.forward(obs, cache);
  }

  [[nodiscard]] Vector probabilities(const SparseVector& obs, long state_id) const {
    detail::require(discrete(), "probabilities are defined for categorical policies only");
    return softmax(head(obs, state_id));
  }

  [[nodiscard]] Action sample(const SparseVector& obs, long state_id, Rng& rng) const {
    const Vector h = head(obs, state_id);
    Action a;
    if (discrete()) {
      const Vector p = softmax(h);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double u = unit(rng);
      double acc = 0.0;
      Eigen::Index pick = p.size() - 1;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      a.index = pick;
      a.encoding = Vector::Zero(p.size());
      a.encoding[pick] = 1.0;
    } else {
      std::normal_distribution<double> n(0.0, 1.0);
      a.encoding = h;
      for (Eigen::Index i = 0; i < h.size(); ++i) a.encoding[i] += std::exp(log_std[i]) * n(rng);
    }
    return a;
  }

  /// Most likely action.
  [[nodiscard]] Action mode(const SparseVector& obs, long state_id) const {
    const Vector h = head(obs, state_id);
    Action a;
    if (discrete()) {
      Eigen::Index best = 0;
      h.maxCoeff(&best);
      a.index = best;
      a.encoding = Vector::Zero(h.size());
      a.encoding[best] = 1.0;
    } else {
      a.encoding = h;
    }
    return a;
  }

  [[nodiscard]] double log_prob(const SparseVector& obs, long state_id, const Action& a) const {
    return log_prob_from_head(head(obs, state_id), a);
  }

  [[nodiscard]] double log_prob_from_head(const Vector& h, const Action& a) const {
    if (discrete()) return h[a.index] - detail::log_sum_exp(h);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      const double z = (a.encoding[i] - h[i]) * std::exp(-log_std[i]);
      lp += -0.5 * z * z - log_std[i] - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
  }

  [[nodiscard]] Eigen::Index parameter_count() const {
    switch (kind_) {
      case PolicyKind::TabularSoftmax: return logits.size();
      case PolicyKind::MlpCategorical: return net.parameter_count();
      case PolicyKind::MlpGaussian: return net.parameter_count() + log_std.size();
    }
    return 0;
  }

  /// Tabular: row-major logits. MLP: network parameters, then log-std for the Gaussian.
  [[nodiscard]] Vector flat_parameters() const {
    Vector out(parameter_count());
    if (kind_ == PolicyKind::TabularSoftmax) {
      Eigen::Index k = 0;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        for (Eigen::Index c = 0; c < logits.cols(); ++c) out[k++] = logits(r, c);
      }
      return out;
    }
    const Eigen::Index n = net.parameter_count();
    out.head(n) = net.flat_parameters();
    if (kind_ == PolicyKind::MlpGaussian) out.tail(log_std.size()) = log_std;
    return out;
  }

  void set_flat_parameters(const Vector& flat) {
    detail::require(flat.size() == parameter_count(), "policy parameter size mismatch");
    if (kind_ == PolicyKind::TabularSoftmax) {
      Eigen::Index k = 0;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(r, c) = flat[k++];
      }
      return;
    }
    const Eigen::Index n = net.parameter_count();
    net.set_flat_parameters(flat.head(n));
    if (kind_ == PolicyKind::MlpGaussian) log_std = flat.tail(log_std.size());
  }

  static Vector softmax(const Vector& h) {
    const Vector e = (h.array() - h.maxCoeff()).exp().matrix();
    return e / e.sum();
  }

  Matrix logits;
  DenseNet net;
  Vector log_std;

 private:
  static DenseNet make_net(std::size_t in, std::size_t out, const std::vector<std::size_t>& hidden, Rng& rng) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    DenseNet n(dims, Activation::tanh, rng);
    // Small output layer so the initial policy is close to uniform.
    n.mutable_weight(n.layer_count() - 1) *= 0.01;
    n.mutable_bias(n.layer_count() - 1).setZero();
    return n;
  }

  PolicyKind kind_ = PolicyKind::TabularSoftmax;
};

inline Action policy_action(const Policy& policy, const SparseVector& obs, long state_id, Rng& rng) {
  return policy.sample(obs, state_id, rng);
}

inline Action policy_mode(const Policy& policy, const SparseVector& obs, long state_id) {
  return policy.mode(obs, state_id);
}

struct PolicySample {
  SparseVector obs;
  long state_id = -1;
  Action action;
  double advantage = 0.0;
  double old_log_prob = 0.0;
};

struct PolicyUpdateConfig {
  double learning_rate = 1e-2;
  double entropy_coef = 0.0;
  bool use_clip = false;
  double clip_epsilon = 0.2;

  void validate() const {
    detail::require(learning_rate > 0.0, "policy learning rate must be positive");
    detail::require(entropy_coef >= 0.0, "entropy coefficient must be non-negative");
    detail::require(clip_epsilon > 0.0 && clip_epsilon < 1.0, "clip epsilon must lie in (0, 1)");
  }
};

namespace detail {

// Surrogate objective contribution of one sample and its gradient with respect to the policy head
// (plus log-std for the Gaussian). Loss = -objective - entropy_coef * entropy, averaged over samples.
struct HeadGradient {
  double loss = 0.0;
  Vector d_head;
  Vector d_log_std;
};

inline HeadGradient surrogate_head(const Policy& policy, const Vector& h, const PolicySample& x,
                                   const PolicyUpdateConfig& config, double scale) {
  HeadGradient out;
  const double lp = policy.log_prob_from_head(h, x.action);
  double d_lp = 0.0;
  if (config.use_clip) {
    const double ratio = std::exp(lp - x.old_log_prob);
    const double clipped = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
    const double unclipped_obj = ratio * x.advantage;
    const double clipped_obj = clipped * x.advantage;
    out.loss = -scale * std::min(unclipped_obj, clipped_obj);
    if (unclipped_obj <= clipped_obj) d_lp = ratio * x.advantage;
  } else {
    out.loss = -scale * lp * x.advantage;
    d_lp = x.advantage;
  }
  if (policy.discrete()) {
    const Vector p = Policy::softmax(h);
    Vector dlogp = -p;
    dlogp[x.action.index] += 1.0;
    out.d_head = -scale * d_lp * dlogp;
    if (config.entropy_coef > 0.0) {
      double ent = 0.0;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) ent -= p[i] * std::log(p[i]);
      }
      out.loss -= scale * config.entropy_coef * ent;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double lpi = p[i] > 0.0 ? std::log(p[i]) : 0.0;
        out.d_head[i] += scale * config.entropy_coef * p[i] * (lpi + ent);
      }
    }
  } else {
    const Vector inv_var = (-2.0 * policy.log_std).array().exp().matrix();
    const Vector diff = x.action.encoding - h;
    out.d_head = -scale * d_lp * diff.cwiseProduct(inv_var);
    out.d_log_std = -scale * d_lp * (diff.cwiseAbs2().cwiseProduct(inv_var).array() - 1.0).matrix();
    if (config.entropy_coef > 0.0) {
      const double ent = policy.log_std.sum() + 0.5 * static_cast<double>(h.size()) * std::log(2.0 * M_PI * M_E);
      out.loss -= scale * config.entropy_coef * ent;
      out.d_log_std.array() -= scale * config.entropy_coef;
    }
  }
  return out;
}

inline bool usable(const PolicySample& x) {
  if (std::isfinite(x.advantage)) return true;
  std::cerr << "warning: skipping policy sample with non-finite advantage\n";
  return false;
}

}  // namespace detail

/// Mean surrogate loss over the usable samples.
inline double surrogate_loss(const Policy& policy, const std::vector<PolicySample>& batch,
                             const PolicyUpdateConfig& config) {
  std::size_t n = 0;
  for (const auto& x : batch) n += std::isfinite(x.advantage) ? 1 : 0;
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (const auto& x : batch) {
    if (!std::isfinite(x.advantage)) continue;
    loss += detail::surrogate_head(policy, policy.head(x.obs, x.state_id), x, config, scale).loss;
  }
  return loss;
}

/// Gradient of surrogate_loss, in flat_parameters order.
inline Vector surrogate_gradient(const Policy& policy, const std::vector<PolicySample>& batch,
                                 const PolicyUpdateConfig& config) {
  std::size_t n = 0;
  for (const auto& x : batch) n += detail::usable(x) ? 1 : 0;
  Vector grad = Vector::Zero(policy.parameter_count());
  if (n == 0) return grad;
  const double scale = 1.0 / static_cast<double>(n);
  if (policy.kind() == PolicyKind::TabularSoftmax) {
    const Eigen::Index cols = policy.logits.cols();
    for (const auto& x : batch) {
      if (!std::isfinite(x.advantage)) continue;
      const auto hg = detail::surrogate_head(policy, policy.head(x.obs, x.state_id), x, config, scale);
      grad.segment(x.state_id * cols, cols) += hg.d_head;
    }
    return grad;
  }
  Gradients g = policy.net.zero_gradients();
  Vector d_log_std = Vector::Zero(policy.log_std.size());
  for (const auto& x : batch) {
    if (!std::isfinite(x.advantage)) continue;
    ForwardCache cache;
    const Vector h = policy.head(x.obs, x.state_id, &cache);
    const auto hg = detail::surrogate_head(policy, h, x, config, scale);
    policy.net.backward_into(cache, hg.d_head, g);
    if (policy.kind() == PolicyKind::MlpGaussian) d_log_std += hg.d_log_std;
  }
  const Eigen::Index nn = policy.net.parameter_count();
  grad.head(nn) = g.flatten();
  if (policy.kind() == PolicyKind::MlpGaussian) grad.tail(d_log_std.size()) = d_log_std;
  return grad;
}

/// One Adam step on the surrogate. Returns the pre-step loss.
inline double policy_update(Policy& policy, OptimizerState& optimizer, const std::vector<PolicySample>& batch,
                            const PolicyUpdateConfig& config) {
  config.validate();
  const double loss = surrogate_loss(policy, batch, config);
  const Vector grad = surrogate_gradient(policy, batch, config);
  Vector params = policy.flat_parameters();
  if (optimizer.m.size() != params.size()) optimizer = OptimizerState(params.size(), config.learning_rate);
  optimizer.learning_rate = config.learning_rate;
  optimizer_step(optimizer, params, grad);
  policy.set_flat_parameters(params);
  if (policy.kind() == PolicyKind::MlpGaussian && !policy.log_std.allFinite()) {
    throw NumericalError("policy_update: non-finite log-std");
  }
  return loss;
}

/// State-value baseline: a table for tabular policies, a small network otherwise.
class ValueBaseline {
 public:
  ValueBaseline() = default;
  static ValueBaseline tabular(std::size_t n_states, double learning_rate) {
    ValueBaseline v;
    v.table_ = Vector::Zero(static_cast<Eigen::Index>(n_states));
    v.lr_ = learning_rate;
    return v;
  }
  static ValueBaseline network(std::size_t obs_dim, const std::vector<std::size_t>& hidden, double learning_rate,
                               Rng& rng) {
    ValueBaseline v;
    std::vector<std::size_t> dims{obs_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    v.net_ = DenseNet(dims, Activation::tanh, rng);
    v.lr_ = learning_rate;
    v.opt_ = OptimizerState(v.net_.parameter_count(), learning_rate);
    v.use_net_ = true;
    return v;
  }

  [[nodiscard]] double predict(const SparseVector& obs, long state_id) const {
    if (use_net_) return net_.forward(obs)[0];
    return table_[state_id];
  }

  /// Regression toward the returns: tabular running average step, or one Adam step on the MSE.
  void update(const std::vector<PolicySample>& samples, const std::vector<double>& returns) {
    if (samples.empty()) return;
    if (!use_net_) {
      Vector sum = Vector::Zero(table_.size());
      Vector cnt = Vector::Zero(table_.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(returns[i])) continue;
        sum[samples[i].state_id] += returns[i];
        cnt[samples[i].state_id] += 1.0;
      }
      for (Eigen::Index s = 0; s < table_.size(); ++s) {
        if (cnt[s] > 0.0) table_[s] += lr_ * (sum[s] / cnt[s] - table_[s]);
      }
      return;
    }
    Gradients g = net_.zero_gradients();
    const double scale = 1.0 / static_cast<double>(samples.size());
    Vector d(1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::isfinite(returns[i])) continue;
      ForwardCache cache;
      const double v = net_.forward(samples[i].obs, &cache)[0];
      d[0] = 2.0 * scale * (v - returns[i]);
      net_.backward_into(cache, d, g);
    }
    optimizer_step(opt_, net_, g);
  }

 private:
  Vector table_;
  DenseNet net_;
  OptimizerState opt_;
  double lr_ = 0.1;
  bool use_net_ = false;
};

// ---------------------------------------------------------------------------
// Training loop

enum class PolicyChoice { automatic, tabular, mlp };

struct TrainConfig {
  std::size_t total_episodes = 1000;
  std::size_t episodes_per_iteration = 8;
  double gamma_rl = 0.99;
  double policy_lr = 1e-2;
  double value_lr = 1e-2;
  double critic_lr = 3e-4;
  double entropy_coef = 0.0;
  double clip_epsilon = 0.2;
  bool use_ppo = false;
  std::size_t policy_epochs = 1;
  /// Representation updates per iteration; the policy is updated `policy_epochs` times.
  std::size_t contrastive_updates = 1;
  std::size_t batch_size = 64;
  std::size_t repetition_factor = 1;
  std::size_t buffer_capacity = 10'000;
  bool normalize_advantages = true;
  bool reward_normalization = false;
  bool learn_temperature = true;
  bool monolithic = false;
  PolicyChoice policy = PolicyChoice::automatic;
  std::vector<std::size_t> policy_hidden{64};
  std::vector<std::size_t> critic_hidden{64, 64};
  std::size_t rep_dim = 16;
  CriticKind critic = CriticKind::L2;
  bool normalize_reps = true;
  double dot_sign = -1.0;
  double icm_forward_weight = 0.2;
  /// Subtract the self-distance in the episodic-distance reward.
  bool etd_self_baseline = true;
  /// Episodes at the end of training over which state visitation is recorded.
  std::size_t visitation_window = 1000;
  double coverage_cell = 0.0;
  RewardSpec reward;
  SamplerConfig sampler;
  LossConfig loss;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t iterations() const {
    return (total_episodes + episodes_per_iteration - 1) / episodes_per_iteration;
  }

  void validate() const {
    detail::require(episodes_per_iteration > 0, "episodes_per_iteration must be positive");
    detail::require(gamma_rl >= 0.0 && gamma_rl <= 1.0, "gamma_rl must lie in [0, 1]");
    detail::require(policy_lr > 0.0 && value_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
    detail::require(clip_epsilon > 0.0 && clip_epsilon < 1.0, "clip_epsilon must lie in (0, 1)");
    detail::require(entropy_coef >= 0.0, "entropy_coef must be non-negative");
    detail::require(batch_size >= 1 && repetition_factor >= 1, "batch size and repetition factor must be positive");
    detail::require(policy_epochs >= 1, "policy_epochs must be positive");
    detail::require(rep_dim >= 1, "rep_dim must be positive");
    if (monolithic) {
      detail::require(reward.source == RewardSource::CTeC, "the monolithic critic is only used with the ctec reward");
    }
    sampler.validate();
    loss.validate();
  }
};

struct IterationMetrics {
  std::size_t iter = 0;
  std::size_t episodes = 0;
  std::size_t coverage = 0;
  double contrastive_loss = std::numeric_limits<double>::quiet_NaN();
  double mean_r_intr = 0.0;
  double rep_variance = std::numeric_limits<double>::quiet_NaN();
  double tau = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingArtifacts {
  std::vector<IterationMetrics> metrics;
  std::vector<std::size_t> coverage_curve;
  /// Visits per coverage key over the whole run.
  std::map<std::vector<long>, std::size_t> visitation;
  /// Visits per tabular state over the final `visitation_window` episodes.
  std::vector<std::size_t> recent_visitation;
  std::size_t reachable = 0;
  std::optional<ContrastiveModel> model;
  std::optional<MonolithicCritic> monolithic;
  Policy policy;
};

inline void write_metrics_csv(std::ostream& out, const std::vector<IterationMetrics>& metrics) {
  out << "iter,episodes,coverage,contrastive_loss,mean_r_intr,rep_variance,tau\n";
  for (const auto& m : metrics) {
    out << m.iter << ',' << m.episodes << ',' << m.coverage << ',' << format_double(m.contrastive_loss) << ','
        << format_double(m.mean_r_intr) << ',' << format_double(m.rep_variance) << ',' << format_double(m.tau) << '\n';
  }
}

namespace detail {

class RunningScale {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  [[nodiscard]] double stddev() const {
    return n_ < 2 ? 1.0 : std::max(std::sqrt(m2_ / static_cast<double>(n_ - 1)), 1e-8);
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

[[noreturn]] inline void rethrow_with_step(const std::exception& e, const std::string& step, std::size_t iter) {
  const std::string msg = "iteration " + std::to_string(iter) + ", " + step + ": " + e.what();
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw ConfigError(msg);
  throw NumericalError(msg);
}

}  // namespace detail

/// Runs the interleaved loop on `env` (which is modified). Deterministic given config.seed.
inline TrainingArtifacts train(Environment& env, const TrainConfig& config) {
  config.validate();
  const TabularMDP* mdp = env.tabular();
  config.reward.validate(mdp != nullptr);
  const RewardSource source = config.reward.source;

  Rng rng(config.seed);
  const std::size_t obs_dim = env.observation_dim();
  const std::size_t n_actions = env.action_count();
  const bool discrete = n_actions > 0;

  TrainingArtifacts art;
  art.reachable = env.reachable_count();

  // Policy and baseline.
  bool tabular_policy = false;
  if (config.policy == PolicyChoice::tabular) {
    detail::require(dynamic_cast<TabularEnv*>(&env) != nullptr, "tabular policies need a tabular environment");
    tabular_policy = true;
  } else if (config.policy == PolicyChoice::automatic) {
    tabular_policy = dynamic_cast<TabularEnv*>(&env) != nullptr;
  }
  Policy policy;
  ValueBaseline baseline;
  if (tabular_policy) {
    policy = Policy::tabular(mdp->n_states, n_actions);
    baseline = ValueBaseline::tabular(mdp->n_states, config.value_lr);
  } else if (discrete) {
    policy = Policy::categorical(obs_dim, n_actions, config.policy_hidden, rng);
    baseline = ValueBaseline::network(obs_dim, config.policy_hidden, config.value_lr, rng);
  } else {
    policy = Policy::gaussian(obs_dim, env.action_dim(), config.policy_hidden, rng);
    baseline = ValueBaseline::network(obs_dim, config.policy_hidden, config.value_lr, rng);
  }
  OptimizerState policy_opt(policy.parameter_count(), config.policy_lr);
  PolicyUpdateConfig pu{config.policy_lr, config.entropy_coef, config.use_ppo, config.clip_epsilon};

  // Representation learners.
  const bool trains_model = source == RewardSource::CTeC || source == RewardSource::ETDLite;
  ContrastiveModelConfig mc;
  mc.state_dim = obs_dim;
  mc.action_dim = source == RewardSource::ETDLite ? 0 : env.action_dim();
  mc.hidden = config.critic_hidden;
  mc.rep_dim = config.rep_dim;
  mc.critic = config.critic;
  mc.normalize_reps = config.normalize_reps;
  mc.dot_sign = config.dot_sign;
  std::optional<ContrastiveLearner> learner;
  std::optional<MonolithicLearner> mono;
  if (trains_model) {
    if (config.monolithic) {
      mono.emplace(MonolithicCritic(obs_dim, env.action_dim(), config.critic_hidden, Activation::relu, rng),
                   config.critic_lr, config.learn_temperature);
    } else {
      learner.emplace(ContrastiveModel(mc, rng), config.critic_lr, config.learn_temperature);
    }
  }
  std::optional<RndBonus> rnd;
  std::optional<IcmModule> icm;
  if (source == RewardSource::RNDLite) rnd.emplace(obs_dim, config.critic_hidden, config.rep_dim, config.critic_lr, rng);
  if (source == RewardSource::ICMLite) {
    icm.emplace(obs_dim, env.action_dim(), discrete, config.rep_dim, config.critic_hidden, config.critic_lr, rng,
                config.icm_forward_weight);
  }

  TrajectoryBuffer buffer(config.buffer_capacity);
  CoverageTracker coverage;
  CountTable counts;
  detail::RunningScale reward_scale;
  const auto probes = env.probe_observations();
  // Future-state mass of the stored trajectories, kept in step with the buffer. Contributions
  // are frozen at append time, so a gamma schedule mixes the discounts of past iterations.
  Vector future_mass;
  std::deque<std::vector<std::pair<long, double>>> future_contrib;
  const bool tracks_marginal = config.reward.needs_oracle();
  if (tracks_marginal) future_mass = Vector::Zero(static_cast<Eigen::Index>(mdp->n_states));
  if (mdp != nullptr) art.recent_visitation.assign(mdp->n_states, 0);

  const std::size_t iterations = config.iterations();
  std::size_t episodes_done = 0;
  for (std::size_t iter = 0; iter < iterations; ++iter) {
    const double progress = iterations > 1 ? static_cast<double>(iter) / static_cast<double>(iterations - 1) : 1.0;
    const std::size_t episodes_now = std::min(config.episodes_per_iteration, config.total_episodes - episodes_done);

    // 1. Rollouts.
    std::vector<Trajectory> fresh;
    std::vector<std::vector<double>> etd_rewards;
    try {
      for (std::size_t e = 0; e < episodes_now; ++e) {
        const bool in_window = episodes_done + e + config.visitation_window >= config.total_episodes;
        Trajectory traj;
        std::vector<double> etd_r;
        EpisodicMemory memory;
        SparseVector obs = env.reset(rng);
        long id = env.state_id();
        coverage.observe_key(env.coverage_key());
        ++art.visitation[env.coverage_key()];
        if (in_window && id >= 0 && !art.recent_visitation.empty()) ++art.recent_visitation[static_cast<std::size_t>(id)];
        if (source == RewardSource::ETDLite) memory.push_back(learner->model().embed_anchor(obs));
        const std::size_t horizon = env.horizon();
        for (std::size_t t = 0; t < horizon; ++t) {
          const Action action = policy.sample(obs, id, rng);
          SparseVector next = env.step(action, rng);
          const long next_id = env.state_id();
          Transition tr;
          tr.state = std::move(obs);
          tr.action = action.encoding;
          tr.next_state = next;
          tr.step_index = t;
          tr.terminal = t + 1 == horizon;
          tr.state_id = id;
          tr.action_id = action.index;
          tr.next_state_id = next_id;
          traj.push_back(std::move(tr));
          if (source == RewardSource::ETDLite) etd_r.push_back(etd_reward(memory, learner->model(), next, config.etd_self_baseline));
          coverage.observe_key(env.coverage_key());
          ++art.visitation[env.coverage_key()];
          if (in_window && next_id >= 0 && !art.recent_visitation.empty()) {
            ++art.recent_visitation[static_cast<std::size_t>(next_id)];
          }
          obs = std::move(next);
          id = next_id;
        }
        fresh.push_back(std::move(traj));
        etd_rewards.push_back(std::move(etd_r));
      }
    } catch (const std::exception& e) {
      detail::rethrow_with_step(e, "rollout", iter);
    }
    episodes_done += episodes_now;

    // 2. Store.
    for (const auto& traj : fresh) {
      if (tracks_marginal) {
        if (buffer.size() == buffer.capacity()) {
          for (const auto& [sid, p] : future_contrib.front()) future_mass[sid] -= p;
          future_contrib.pop_front();
        }
        future_contrib.push_back(trajectory_future_mass(traj, config.sampler, progress));
        for (const auto& [sid, p] : future_contrib.back()) future_mass[sid] += p;
      }
      buffer.append(traj);
    }

    // 3. Representation / bonus-model updates.
    IterationMetrics m;
    m.iter = iter;
    try {
      if (trains_model) {
        double loss_sum = 0.0;
        for (std::size_t u = 0; u < config.contrastive_updates; ++u) {
          const ContrastiveBatch batch =
              sample_batch(buffer, config.batch_size, config.repetition_factor, config.sampler, rng, progress);
          loss_sum += learner ? learner->update(batch, config.loss) : mono->update(batch, config.loss);
        }
        if (config.contrastive_updates > 0) m.contrastive_loss = loss_sum / static_cast<double>(config.contrastive_updates);
        if (learner) {
          m.tau = learner->model().tau();
          if (probes.size() >= 2) m.rep_variance = representation_variance(learner->model(), probes);
        } else {
          m.tau = mono->critic().tau();
        }
      }
      if (rnd || icm) {
        std::vector<const Transition*> pool;
        for (const auto& traj : fresh) {
          for (const auto& tr : traj.transitions()) pool.push_back(&tr);
        }
        for (std::size_t u = 0; u < std::max<std::size_t>(config.contrastive_updates, 1); ++u) {
          std::vector<const Transition*> batch;
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          for (std::size_t k = 0; k < config.batch_size; ++k) batch.push_back(pool[pick(rng)]);
          if (rnd) {
            std::vector<SparseVector> states;
            for (const auto* tr : batch) states.push_back(tr->next_state);
            m.contrastive_loss = rnd->train(states);
          } else {
            m.contrastive_loss = icm->train(batch).second;
          }
        }
      }
    } catch (const std::exception& e) {
      detail::rethrow_with_step(e, "representation update", iter);
    }

    // 4. Intrinsic rewards from the current snapshot.
    std::vector<std::vector<double>> rewards(fresh.size());
    try {
      std::optional<OccupancyOracle> oracle;
      Vector marginal;
      std::map<std::pair<long, long>, double> oracle_cache;
      if (config.reward.needs_oracle()) {
        Matrix table(static_cast<Eigen::Index>(mdp->n_states), static_cast<Eigen::Index>(n_actions));
        for (std::size_t s = 0; s < mdp->n_states; ++s) {
          table.row(static_cast<Eigen::Index>(s)) =
              policy.probabilities(env.observation_for(static_cast<long>(s)), static_cast<long>(s)).transpose();
        }
        oracle.emplace(*mdp, std::move(table), effective_gamma(config.sampler, progress));
        marginal = (future_mass / static_cast<double>(buffer.transition_count())).cwiseMax(0.0);
      }
      const double g_cl = effective_gamma(config.sampler, progress);
      for (std::size_t e = 0; e < fresh.size(); ++e) {
        const Trajectory& traj = fresh[e];
        const std::size_t h = traj.horizon();
        std::vector<double>& r = rewards[e];
        r.assign(h, 0.0);
        switch (source) {
          case RewardSource::CTeC: {
            if (config.reward.estimator == RewardEstimator::suffix_mc && learner) {
              r = ctec_reward_suffix(learner->model(), traj, g_cl, config.reward.mc_normalize, config.reward.fast_path);
            } else if (config.reward.estimator == RewardEstimator::suffix_mc) {
              for (std::size_t t = 0; t < h; ++t) {
                double total = 0.0;
                double w = 1.0;
                double wsum = 0.0;
                for (std::size_t i = t; i <= h; ++i, w *= g_cl) {
                  total += w * -mono->critic().score(traj[t].state, traj[t].action, traj.observation(i));
                  wsum += w;
                }
                r[t] = config.reward.mc_normalize ? total / wsum : total;
              }
            } else {
              for (std::size_t t = 0; t < h; ++t) {
                const std::size_t f = t + sample_offset(config.sampler, future_positions(config.sampler, h, t), rng, progress);
                const SparseVector& sf = traj.observation(f);
                r[t] = learner ? ctec_reward_single(learner->model(), traj[t].state, traj[t].action, sf)
                               : -mono->critic().score(traj[t].state, traj[t].action, sf);
              }
            }
            break;
          }
          case RewardSource::ForwardKL:
          case RewardSource::ReverseKL: {
            for (std::size_t t = 0; t < h; ++t) {
              const auto key = std::make_pair(traj[t].state_id, traj[t].action_id);
              auto it = oracle_cache.find(key);
              if (it == oracle_cache.end()) {
                const auto s = static_cast<std::size_t>(key.first);
                const auto a = static_cast<std::size_t>(key.second);
                const double v = source == RewardSource::ForwardKL ? forward_kl_reward(*oracle, marginal, s, a)
                                                                   : exact_reverse_kl_reward(*oracle, marginal, s, a).reward;
                it = oracle_cache.emplace(key, v).first;
              }
              r[t] = it->second;
            }
            break;
          }
          case RewardSource::Count: {
            for (std::size_t t = 0; t < h; ++t) {
              std::vector<long> key;
              if (traj[t].next_state_id >= 0) {
                key = {traj[t].next_state_id};
              } else {
                const Vector x = to_dense(traj[t].next_state);
                const double cell = config.coverage_cell > 0.0 ? config.coverage_cell : 0.25;
                for (Eigen::Index i = 0; i < x.size(); ++i) key.push_back(static_cast<long>(std::floor(x[i] / cell)));
              }
              r[t] = count_bonus(counts, key, 1.0, config.reward.count_score_first);
            }
            break;
          }
          case RewardSource::RNDLite:
            for (std::size_t t = 0; t < h; ++t) r[t] = rnd->bonus(traj[t].next_state);
            break;
          case RewardSource::ICMLite:
            for (std::size_t t = 0; t < h; ++t) r[t] = icm->bonus(traj[t].state, traj[t].action, traj[t].next_state);
            break;
          case RewardSource::ETDLite:
            r = etd_rewards[e];
            break;
          case RewardSource::None:
            break;
        }
        for (double& x : r) {
          x *= config.reward.beta;
          if (!std::isfinite(x)) throw NumericalError("non-finite intrinsic reward");
        }
      }
    } catch (const std::exception& e) {
      detail::rethrow_with_step(e, "intrinsic reward", iter);
    }

    // 5. Policy update on discounted intrinsic returns.
    try {
      std::vector<PolicySample> samples;
      std::vector<double> returns;
      double reward_sum = 0.0;
      std::size_t reward_n = 0;
      for (std::size_t e = 0; e < fresh.size(); ++e) {
        for (double x : rewards[e]) {
          reward_sum += x;
          ++reward_n;
          if (config.reward_normalization) reward_scale.add(x);
        }
      }
      m.mean_r_intr = reward_n > 0 ? reward_sum / static_cast<double>(reward_n) : 0.0;
      const double scale = config.reward_normalization ? 1.0 / reward_scale.stddev() : 1.0;
      for (std::size_t e = 0; e < fresh.size(); ++e) {
        const Trajectory& traj = fresh[e];
        std::vector<double> g(traj.horizon() + 1, 0.0);
        for (std::size_t t = traj.horizon(); t-- > 0;) g[t] = scale * rewards[e][t] + config.gamma_rl * g[t + 1];
        for (std::size_t t = 0; t < traj.horizon(); ++t) {
          PolicySample x;
          x.obs = traj[t].state;
          x.state_id = traj[t].state_id;
          x.action.index = traj[t].action_id;
          x.action.encoding = traj[t].action;
          x.old_log_prob = policy.log_prob(x.obs, x.state_id, x.action);
          x.advantage = g[t] - baseline.predict(x.obs, x.state_id);
          samples.push_back(std::move(x));
          returns.push_back(g[t]);
        }
      }
      if (config.normalize_advantages && samples.size() > 1) {
        double mean = 0.0;
        for (const auto& x : samples) mean += x.advantage;
        mean /= static_cast<double>(samples.size());
        double var = 0.0;
        for (const auto& x : samples) var += (x.advantage - mean) * (x.advantage - mean);
        const double sd = std::sqrt(var / static_cast<double>(samples.size() - 1));
        for (auto& x : samples) x.advantage = (x.advantage - mean) / (sd + 1e-8);
      }
      for (std::size_t k = 0; k < config.policy_epochs; ++k) policy_update(policy, policy_opt, samples, pu);
      baseline.update(samples, returns);
    } catch (const std::exception& e) {
      detail::rethrow_with_step(e, "policy update", iter);
    }

    m.episodes = episodes_done;
    m.coverage = coverage.record();
    art.metrics.push_back(m);
  }

  art.coverage_curve = coverage.curve();
  if (learner) art.model = learner->model();
  if (mono) art.monolithic = mono->critic();
  art.policy = std::move(policy);
  return art;
}

}  // namespace tec
