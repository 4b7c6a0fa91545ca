#pragma once

// Exploration bonuses: the contrastive reward (single-sample and discounted-suffix estimators),
// oracle KL rewards, and the count / RND / ICM / episodic-distance baselines.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tec/contrastive.hpp"
#include "tec/error.hpp"
#include "tec/format.hpp"
#include "tec/nn.hpp"
#include "tec/oracle.hpp"
#include "tec/trajectory.hpp"

namespace tec {

enum class RewardSource { CTeC, ForwardKL, ReverseKL, Count, RNDLite, ICMLite, ETDLite, None };
enum class RewardEstimator { single_sample, suffix_mc };

inline std::string to_string(RewardSource s) {
  switch (s) {
    case RewardSource::CTeC: return "ctec";
    case RewardSource::ForwardKL: return "forward_kl";
    case RewardSource::ReverseKL: return "reverse_kl";
    case RewardSource::Count: return "count";
    case RewardSource::RNDLite: return "rnd";
    case RewardSource::ICMLite: return "icm";
    case RewardSource::ETDLite: return "etd";
    case RewardSource::None: return "none";
  }
  return "?";
}

inline RewardSource parse_reward_source(const std::string& name) {
  for (auto s : {RewardSource::CTeC, RewardSource::ForwardKL, RewardSource::ReverseKL, RewardSource::Count,
                 RewardSource::RNDLite, RewardSource::ICMLite, RewardSource::ETDLite, RewardSource::None}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown reward source '" + name + "'");
}

struct RewardSpec {
  RewardSource source = RewardSource::CTeC;
  RewardEstimator estimator = RewardEstimator::single_sample;
  bool mc_normalize = false;
  double beta = 1.0;
  /// Use the psi-sum recurrence for the suffix estimator (squared-L2 and dot critics only).
  bool fast_path = false;
  /// Counts are scored before the current visit is added.
  bool count_score_first = true;

  [[nodiscard]] bool needs_oracle() const {
    return source == RewardSource::ForwardKL || source == RewardSource::ReverseKL;
  }

  void validate(bool tabular_available) const {
    detail::require(beta > 0.0, "reward scale beta must be positive");
    if (needs_oracle() && !tabular_available) {
      throw UnsupportedConfiguration(to_string(source) + " reward needs a tabular environment");
    }
  }
};

// ---------------------------------------------------------------------------
// Contrastive reward

/// r = -C(phi(s, a), psi(s_f)); the representation distance for distance critics.
inline double ctec_reward_single(const ContrastiveModel& model, const SparseVector& s, const Vector& a,
                                 const SparseVector& s_f) {
  return -model.similarity(model.embed_anchor(s, a), model.embed_future(s_f));
}

/// Per-transition rewards r_t = norm_t * sum_{i=t}^{H} g^(i-t) (-C(phi_t, psi_i)) over the
/// observations of the trajectory, where norm_t = (1 - g) / (1 - g^(H-t+1)) when `mc_normalize`
/// and 1 otherwise. The generic form is a discounted suffix of scalar critic values; the fast
/// path aggregates psi along the suffix and needs a squared-L2 or dot critic.
inline std::vector<double> ctec_reward_suffix(const ContrastiveModel& model, const Trajectory& trajectory,
                                              double gamma_cl, bool mc_normalize, bool fast_path = false) {
  detail::require(gamma_cl >= 0.0 && gamma_cl < 1.0, "gamma_cl must be in [0, 1)");
  const CriticKind kind = model.critic_kind();
  if (fast_path && kind != CriticKind::L2NoSqrt && kind != CriticKind::Dot) {
    throw ConfigError("the psi-sum fast path is exact only for the squared-L2 and dot critics");
  }
  const std::size_t h = trajectory.horizon();
  std::vector<double> rewards(h, 0.0);
  if (h == 0) return rewards;

  std::vector<Vector> phi(h);
  std::vector<Vector> psi(h + 1);
  for (std::size_t t = 0; t < h; ++t) phi[t] = model.embed_anchor(trajectory[t].state, trajectory[t].action);
  for (std::size_t i = 0; i <= h; ++i) psi[i] = model.embed_future(trajectory.observation(i));

  auto normalizer = [&](std::size_t t) {
    if (!mc_normalize) return 1.0;
    const double terms = static_cast<double>(h - t + 1);
    return gamma_cl == 0.0 ? 1.0 : (1.0 - gamma_cl) / (1.0 - std::pow(gamma_cl, terms));
  };

  if (fast_path) {
    // Backward sweep: S_t = psi_t + g S_{t+1}, Q_t = |psi_t|^2 + g Q_{t+1}, W_t = 1 + g W_{t+1}.
    Vector s_sum = psi[h];
    double q_sum = psi[h].squaredNorm();
    double w_sum = 1.0;
    for (std::size_t t = h; t-- > 0;) {
      s_sum = psi[t] + gamma_cl * s_sum;
      q_sum = psi[t].squaredNorm() + gamma_cl * q_sum;
      w_sum = 1.0 + gamma_cl * w_sum;
      double total = 0.0;
      if (kind == CriticKind::L2NoSqrt) {
        total = w_sum * phi[t].squaredNorm() - 2.0 * phi[t].dot(s_sum) + q_sum;
      } else {
        total = -model.config().dot_sign * phi[t].dot(s_sum);
      }
      rewards[t] = normalizer(t) * total;
    }
    return rewards;
  }

  for (std::size_t t = 0; t < h; ++t) {
    double total = 0.0;
    double weight = 1.0;
    for (std::size_t i = t; i <= h; ++i) {
      total += weight * -model.similarity(phi[t], psi[i]);
      weight *= gamma_cl;
      if (weight == 0.0) break;
    }
    rewards[t] = normalizer(t) * total;
  }
  return rewards;
}

// ---------------------------------------------------------------------------
// Count bonus

class CountTable {
 public:
  [[nodiscard]] std::size_t count(const std::vector<long>& key) const {
    auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
  }
  void increment(const std::vector<long>& key) { ++counts_[key]; }
  [[nodiscard]] std::size_t size() const { return counts_.size(); }

 private:
  std::map<std::vector<long>, std::size_t> counts_;
};

/// beta / sqrt(n(s) + 1); the visit is recorded after scoring when `score_first`, before otherwise.
inline double count_bonus(CountTable& table, const std::vector<long>& key, double beta = 1.0,
                          bool score_first = true) {
  if (!score_first) table.increment(key);
  const double bonus = beta / std::sqrt(static_cast<double>(table.count(key)) + 1.0);
  if (score_first) table.increment(key);
  return bonus;
}

// ---------------------------------------------------------------------------
// Random network distillation

class RndBonus {
 public:
  RndBonus() = default;
  RndBonus(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim, double learning_rate,
           Rng& rng) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    target = DenseNet(dims, Activation::relu, rng);
    predictor = DenseNet(dims, Activation::relu, rng);
    state_ = OptimizerState(predictor.parameter_count(), learning_rate);
  }

  /// |predictor(s) - target(s)|^2.
  [[nodiscard]] double bonus(const SparseVector& s) const {
    return (predictor.forward(s) - target.forward(s)).squaredNorm();
  }

  /// One Adam step on the mean squared error over `states`; returns the pre-step loss.
  double train(const std::vector<SparseVector>& states) {
    detail::require(!states.empty(), "RND training batch is empty");
    Gradients g = predictor.zero_gradients();
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(states.size());
    for (const auto& s : states) {
      ForwardCache cache;
      const Vector diff = predictor.forward(s, &cache) - target.forward(s);
      loss += scale * diff.squaredNorm();
      predictor.backward_into(cache, 2.0 * scale * diff, g);
    }
    optimizer_step(state_, predictor, g);
    return loss;
  }

  DenseNet target;
  DenseNet predictor;

 private:
  OptimizerState state_;
};

// ---------------------------------------------------------------------------
// Intrinsic curiosity

/// Feature net trained through an inverse-dynamics head; the forward model predicts next
/// features from (features, action) and is trained with features held fixed. The joint
/// objective weights the forward loss by `forward_weight` and the inverse loss by its complement.
class IcmModule {
 public:
  IcmModule() = default;
  IcmModule(std::size_t obs_dim, std::size_t action_dim, bool discrete_actions, std::size_t feature_dim,
            std::vector<std::size_t> hidden, double learning_rate, Rng& rng, double forward_weight = 0.2)
      : action_dim_(action_dim), discrete_(discrete_actions), forward_weight_(forward_weight) {
    auto dims = [&](std::size_t in, std::size_t out) {
      std::vector<std::size_t> d{in};
      d.insert(d.end(), hidden.begin(), hidden.end());
      d.push_back(out);
      return d;
    };
    feature = DenseNet(dims(obs_dim, feature_dim), Activation::relu, rng);
    forward_model = DenseNet(dims(feature_dim + action_dim, feature_dim), Activation::relu, rng);
    inverse_model = DenseNet(dims(2 * feature_dim, action_dim), Activation::relu, rng);
    feature_state_ = OptimizerState(feature.parameter_count(), learning_rate);
    forward_state_ = OptimizerState(forward_model.parameter_count(), learning_rate);
    inverse_state_ = OptimizerState(inverse_model.parameter_count(), learning_rate);
  }

  /// |forward_model(feat(s), a) - feat(s')|^2.
  [[nodiscard]] double bonus(const SparseVector& s, const Vector& a, const SparseVector& s_next) const {
    const Vector f = feature.forward(s);
    const Vector fn = feature.forward(s_next);
    Vector in(f.size() + a.size());
    in << f, a;
    return (forward_model.forward(in) - fn).squaredNorm();
  }

  /// One joint step over a batch of transitions; returns (inverse loss, forward loss) before the step.
  std::pair<double, double> train(const std::vector<const Transition*>& batch) {
    detail::require(!batch.empty(), "ICM training batch is empty");
    Gradients g_feat = feature.zero_gradients();
    Gradients g_fwd = forward_model.zero_gradients();
    Gradients g_inv = inverse_model.zero_gradients();
    const double scale = 1.0 / static_cast<double>(batch.size());
    const double w_inv = 1.0 - forward_weight_;
    double inv_loss = 0.0;
    double fwd_loss = 0.0;
    const auto fd = static_cast<Eigen::Index>(feature.output_dim());
    for (const Transition* tr : batch) {
      ForwardCache c0;
      ForwardCache c1;
      const Vector f0 = feature.forward(tr->state, &c0);
      const Vector f1 = feature.forward(tr->next_state, &c1);

      Vector inv_in(2 * fd);
      inv_in << f0, f1;
      ForwardCache ci;
      const Vector out = inverse_model.forward(inv_in, &ci);
      Vector d_out;
      if (discrete_) {
        const double lse = detail::log_sum_exp(out);
        Eigen::Index target = 0;
        tr->action.maxCoeff(&target);
        inv_loss += scale * (lse - out[target]);
        d_out = (out.array() - lse).exp().matrix();
        d_out[target] -= 1.0;
      } else {
        const Vector diff = out - tr->action;
        inv_loss += scale * diff.squaredNorm();
        d_out = 2.0 * diff;
      }
      d_out *= scale * w_inv;
      Vector d_in;
      inverse_model.backward_into(ci, d_out, g_inv, &d_in);
      feature.backward_into(c0, d_in.head(fd), g_feat);
      feature.backward_into(c1, d_in.tail(fd), g_feat);

      Vector fwd_in(fd + static_cast<Eigen::Index>(action_dim_));
      fwd_in << f0, tr->action;
      ForwardCache cf;
      const Vector diff = forward_model.forward(fwd_in, &cf) - f1;
      fwd_loss += scale * diff.squaredNorm();
      forward_model.backward_into(cf, 2.0 * scale * forward_weight_ * diff, g_fwd);
    }
    optimizer_step(feature_state_, feature, g_feat);
    optimizer_step(forward_state_, forward_model, g_fwd);
    optimizer_step(inverse_state_, inverse_model, g_inv);
    return {inv_loss, fwd_loss};
  }

  DenseNet feature;
  DenseNet forward_model;
  DenseNet inverse_model;

 private:
  std::size_t action_dim_ = 0;
  bool discrete_ = true;
  double forward_weight_ = 0.2;
  OptimizerState feature_state_;
  OptimizerState forward_state_;
  OptimizerState inverse_state_;
};

// ---------------------------------------------------------------------------
// Episodic temporal distance

/// Anchor representations of the states seen so far in the current episode.
class EpisodicMemory {
 public:
  void clear() { reps_.clear(); }
  void push_back(Vector rep) { reps_.push_back(std::move(rep)); }
  [[nodiscard]] std::size_t size() const { return reps_.size(); }
  [[nodiscard]] bool empty() const { return reps_.empty(); }
  [[nodiscard]] const std::vector<Vector>& entries() const { return reps_; }

 private:
  std::vector<Vector> reps_;
};

/// min_k -C(m_k, v) over the memory; 0 for an empty memory.
inline double etd_distance(const EpisodicMemory& memory, const ContrastiveModel& model, const Vector& v) {
  if (memory.empty()) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : memory.entries()) best = std::min(best, -model.similarity(m, v));
  return best;
}

/// Reward for reaching s_t: the smallest learned distance from an earlier state of the episode.
/// `model` must be state-only; phi'(s_t) is appended to the memory afterwards. With
/// `self_baseline` the distance d(phi'(s_t), psi(s_t)) is subtracted, which plays the role of
/// log p(s_t | s_t) for an encoder pair that is not a quasimetric.
inline double etd_reward(EpisodicMemory& memory, const ContrastiveModel& model, const SparseVector& s_t,
                         bool self_baseline = false) {
  detail::require(!model.uses_action(), "ETD needs a state-only anchor encoder");
  const Vector v = model.embed_future(s_t);
  const Vector u = model.embed_anchor(s_t);
  double r = etd_distance(memory, model, v);
  if (self_baseline && !memory.empty()) r -= -model.similarity(u, v);
  memory.push_back(u);
  return r;
}

// ---------------------------------------------------------------------------
// Reward traces

struct RewardTraceRow {
  std::size_t step = 0;
  RewardSource source = RewardSource::None;
  double reward = 0.0;
};

inline void write_reward_trace(std::ostream& out, const std::vector<RewardTraceRow>& rows) {
  out << "step,source,reward\n";
  for (const auto& r : rows) out << r.step << ',' << to_string(r.source) << ',' << format_double(r.reward) << '\n';
}

}  // namespace tec
