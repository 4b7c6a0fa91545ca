#pragma once

// Exact tabular analysis: discounted occupancies through the resolvent (1 - g)(I - g P_pi)^-1,
// KL rewards, mutual information and the metrics shared by training and reports.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "tec/contrastive.hpp"
#include "tec/environments.hpp"
#include "tec/error.hpp"
#include "tec/nn.hpp"

namespace tec {

inline constexpr double kProbabilityFloor = 1e-6;

/// Past this many states the resolvent is factored with a sparse LU.
inline constexpr std::size_t kDenseOracleLimit = 400;

class OccupancyOracle {
 public:
  /// `policy` is n_states x n_actions with rows summing to 1.
  OccupancyOracle(const TabularMDP& mdp, Matrix policy, double gamma)
      : mdp_(&mdp), policy_(std::move(policy)), gamma_(gamma) {
    detail::require(gamma >= 0.0 && gamma < 1.0, "occupancy oracle needs gamma in [0, 1)");
    detail::require(static_cast<std::size_t>(policy_.rows()) == mdp.n_states &&
                        static_cast<std::size_t>(policy_.cols()) == mdp.n_actions,
                    "policy table shape does not match the MDP");
    for (Eigen::Index s = 0; s < policy_.rows(); ++s) {
      detail::require(policy_.row(s).minCoeff() >= 0.0 && std::abs(policy_.row(s).sum() - 1.0) <= 1e-9,
                      "policy rows must be probability vectors");
    }
    const auto n = static_cast<Eigen::Index>(mdp.n_states);
    p_pi_ = Matrix::Zero(n, n);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        const double w = policy_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
        if (w != 0.0) p_pi_.row(static_cast<Eigen::Index>(s)) += w * mdp.P[s][a].transpose();
      }
    }
    solve();
  }

  [[nodiscard]] const TabularMDP& mdp() const { return *mdp_; }
  [[nodiscard]] const Matrix& policy() const { return policy_; }
  [[nodiscard]] double gamma() const { return gamma_; }
  [[nodiscard]] const Matrix& policy_transition() const { return p_pi_; }
  /// M with M[s] = (1 - g) sum_k g^k (P_pi^k)[s].
  [[nodiscard]] const Matrix& state_occupancy() const { return occupancy_; }

  /// max |(I - g P_pi) M / (1 - g) - I|.
  [[nodiscard]] double resolvent_residual() const {
    const auto n = p_pi_.rows();
    const Matrix r = (Matrix::Identity(n, n) - gamma_ * p_pi_) * occupancy_ / (1.0 - gamma_) - Matrix::Identity(n, n);
    return r.cwiseAbs().maxCoeff();
  }

  /// (1 - g) delta_s + g P(.|s, a)^T M.
  [[nodiscard]] Vector sa_occupancy(std::size_t s, std::size_t a) const {
    if (s >= mdp_->n_states || a >= mdp_->n_actions) throw ConfigError("sa_occupancy: index out of range");
    const Vector& row = mdp_->P[s][a];
    Vector out = Vector::Zero(row.size());
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (row[j] != 0.0) out.noalias() += (gamma_ * row[j]) * occupancy_.row(j).transpose();
    }
    out[static_cast<Eigen::Index>(s)] += 1.0 - gamma_;
    return out;
  }

 private:
  void solve() {
    const auto n = p_pi_.rows();
    const Matrix lhs = Matrix::Identity(n, n) - gamma_ * p_pi_;
    if (static_cast<std::size_t>(n) <= kDenseOracleLimit) {
      Eigen::PartialPivLU<Matrix> lu(lhs);
      occupancy_ = (1.0 - gamma_) * lu.solve(Matrix::Identity(n, n));
    } else {
      Eigen::SparseMatrix<double> sparse = lhs.sparseView(0.0, 0.0);
      sparse.makeCompressed();
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(sparse);
      if (lu.info() != Eigen::Success) throw NumericalError("occupancy oracle: sparse LU failed");
      occupancy_ = (1.0 - gamma_) * lu.solve(Matrix::Identity(n, n));
    }
    if (!occupancy_.allFinite()) throw NumericalError("occupancy oracle: non-finite resolvent");
  }

  const TabularMDP* mdp_;
  Matrix policy_;
  double gamma_;
  Matrix p_pi_;
  Matrix occupancy_;
};

inline Matrix uniform_policy(const TabularMDP& mdp) {
  return Matrix::Constant(static_cast<Eigen::Index>(mdp.n_states), static_cast<Eigen::Index>(mdp.n_actions),
                          1.0 / static_cast<double>(mdp.n_actions));
}

inline Matrix exact_state_occupancy(const OccupancyOracle& oracle) { return oracle.state_occupancy(); }

inline Vector exact_sa_occupancy(const OccupancyOracle& oracle, std::size_t s, std::size_t a) {
  return oracle.sa_occupancy(s, a);
}

/// Mixture of sa-occupancy rows weighted by `anchor_weights` (n_states x n_actions, any scale).
inline Vector buffer_marginal(const OccupancyOracle& oracle, const Matrix& anchor_weights) {
  const TabularMDP& m = oracle.mdp();
  detail::require(static_cast<std::size_t>(anchor_weights.rows()) == m.n_states &&
                      static_cast<std::size_t>(anchor_weights.cols()) == m.n_actions,
                  "anchor weight table shape does not match the MDP");
  const double total = anchor_weights.sum();
  detail::require(total > 0.0 && anchor_weights.minCoeff() >= 0.0, "anchor weights must be non-negative and non-empty");
  const auto n = static_cast<Eigen::Index>(m.n_states);
  Vector next = Vector::Zero(n);
  Vector self = Vector::Zero(n);
  for (std::size_t s = 0; s < m.n_states; ++s) {
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      const double w = anchor_weights(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
      if (w == 0.0) continue;
      next += w * m.P[s][a];
      self[static_cast<Eigen::Index>(s)] += w;
    }
  }
  const double g = oracle.gamma();
  return ((1.0 - g) * self + g * (oracle.state_occupancy().transpose() * next)) / total;
}

/// Floors every entry at `floor` and renormalizes.
inline Vector floored(const Vector& p, double floor = kProbabilityFloor) {
  Vector q = p.cwiseMax(floor);
  return q / q.sum();
}

/// D_KL[p || q] after flooring both arguments.
inline double kl_divergence(const Vector& p, const Vector& q, double floor = kProbabilityFloor) {
  detail::require(p.size() == q.size(), "kl_divergence: dimension mismatch");
  const Vector pf = floored(p, floor);
  const Vector qf = floored(q, floor);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < pf.size(); ++i) kl += pf[i] * std::log(pf[i] / qf[i]);
  return std::max(kl, 0.0);
}

/// -D_KL[p(s_f) || p(s_f | s, a)].
inline double forward_kl_reward(const Vector& marginal, const Vector& conditional) {
  return -kl_divergence(marginal, conditional);
}

inline double forward_kl_reward(const OccupancyOracle& oracle, const Vector& marginal, std::size_t s, std::size_t a) {
  return forward_kl_reward(marginal, oracle.sa_occupancy(s, a));
}

/// -D_KL[c || m] = H(c) + E_c[log m]: the entropy ("surprise") of the conditional plus the
/// familiarity of its mass under the marginal.
struct ReverseKL {
  double reward = 0.0;
  double surprise = 0.0;
  double familiarity = 0.0;
};

inline ReverseKL exact_reverse_kl_reward(const Vector& conditional, const Vector& marginal,
                                         double floor = kProbabilityFloor) {
  detail::require(conditional.size() == marginal.size(), "exact_reverse_kl_reward: dimension mismatch");
  const Vector c = floored(conditional, floor);
  const Vector m = floored(marginal, floor);
  ReverseKL out;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    out.surprise -= c[i] * std::log(c[i]);
    out.familiarity += c[i] * std::log(m[i]);
  }
  out.reward = std::min(out.surprise + out.familiarity, 0.0);
  return out;
}

inline ReverseKL exact_reverse_kl_reward(const OccupancyOracle& oracle, const Vector& marginal, std::size_t s,
                                         std::size_t a) {
  return exact_reverse_kl_reward(oracle.sa_occupancy(s, a), marginal);
}

/// Spread (max - min) of D_KL[p(s_f|s,a) || p(s_f)] over the support of `candidate`, with the
/// marginal taken as the candidate-weighted mixture. Zero at a fixed point of the reward.
inline double kl_constancy_check(const OccupancyOracle& oracle, const Matrix& candidate) {
  const Vector marginal = buffer_marginal(oracle, candidate);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < candidate.rows(); ++s) {
    for (Eigen::Index a = 0; a < candidate.cols(); ++a) {
      if (candidate(s, a) <= 0.0) continue;
      const double kl = -exact_reverse_kl_reward(oracle, marginal, static_cast<std::size_t>(s),
                                                 static_cast<std::size_t>(a)).reward;
      lo = std::min(lo, kl);
      hi = std::max(hi, kl);
    }
  }
  if (hi < lo) throw ContractViolation("kl_constancy_check: candidate has empty support");
  return hi - lo;
}

/// Variant with the buffer marginal reweighed toward a rollout marginal:
/// p'(s_f) = (1 - alpha) p_T(s_f) + alpha p_pi(s_f).
inline double kl_constancy_check(const OccupancyOracle& oracle, const Matrix& candidate, const Vector& rollout_marginal,
                                 double alpha) {
  detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  const Vector marginal = (1.0 - alpha) * buffer_marginal(oracle, candidate) + alpha * rollout_marginal;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < candidate.rows(); ++s) {
    for (Eigen::Index a = 0; a < candidate.cols(); ++a) {
      if (candidate(s, a) <= 0.0) continue;
      const double kl = -exact_reverse_kl_reward(oracle, marginal, static_cast<std::size_t>(s),
                                                 static_cast<std::size_t>(a)).reward;
      lo = std::min(lo, kl);
      hi = std::max(hi, kl);
    }
  }
  if (hi < lo) throw ContractViolation("kl_constancy_check: candidate has empty support");
  return hi - lo;
}

/// InfoNCE bound log K - loss, in nats.
inline double mi_lower_bound(std::size_t batch_size, double converged_loss) {
  detail::require(batch_size >= 2, "mi_lower_bound needs K >= 2");
  return std::log(static_cast<double>(batch_size)) - converged_loss;
}

/// I(S, A; S_f) under anchor weights, by direct summation (no flooring).
inline double exact_mutual_information(const OccupancyOracle& oracle, const Matrix& anchor_weights) {
  const Vector marginal = buffer_marginal(oracle, anchor_weights);
  const double total = anchor_weights.sum();
  double mi = 0.0;
  for (Eigen::Index s = 0; s < anchor_weights.rows(); ++s) {
    for (Eigen::Index a = 0; a < anchor_weights.cols(); ++a) {
      const double w = anchor_weights(s, a) / total;
      if (w == 0.0) continue;
      const Vector c = oracle.sa_occupancy(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        if (c[i] > 0.0) mi += w * c[i] * std::log(c[i] / marginal[i]);
      }
    }
  }
  return mi;
}

inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "pearson_correlation: length mismatch");
  if (x.size() < 2) throw ContractViolation("pearson_correlation: need at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw ContractViolation("pearson_correlation: constant input");
  return sxy / std::sqrt(sxx * syy);
}

struct SaFuture {
  std::size_t s = 0;
  std::size_t a = 0;
  std::size_t future = 0;
};

/// Exact log p(s_f | s, a) - log p(s_f) for each triple.
inline std::vector<double> exact_log_ratios(const OccupancyOracle& oracle, const Vector& marginal,
                                            const std::vector<SaFuture>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& x : samples) {
    const Vector c = oracle.sa_occupancy(x.s, x.a);
    const auto f = static_cast<Eigen::Index>(x.future);
    if (c[f] <= 0.0 || marginal[f] <= 0.0) throw ContractViolation("exact_log_ratios: sample outside the support");
    out.push_back(std::log(c[f]) - std::log(marginal[f]));
  }
  return out;
}

/// Pearson r between critic scores C((s, a), s_f) on one-hot encodings and exact log-ratios.
inline double critic_logratio_correlation(const ContrastiveModel& model, const OccupancyOracle& oracle,
                                          const Vector& marginal, const std::vector<SaFuture>& samples) {
  const TabularMDP& m = oracle.mdp();
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& x : samples) {
    Vector a = Vector::Zero(static_cast<Eigen::Index>(m.n_actions));
    a[static_cast<Eigen::Index>(x.a)] = 1.0;
    scores.push_back(model.similarity(model.embed_anchor(one_hot(m.n_states, x.s), a),
                                      model.embed_future(one_hot(m.n_states, x.future))));
  }
  return pearson_correlation(scores, exact_log_ratios(oracle, marginal, samples));
}

/// Cumulative count of unique discretized states.
class CoverageTracker {
 public:
  /// cell_size 0 keeps keys as given (tabular ids); otherwise continuous points are floored to cells.
  explicit CoverageTracker(double cell_size = 0.0) : cell_size_(cell_size) {
    detail::require(cell_size >= 0.0, "coverage cell size must be non-negative");
  }

  void observe_key(const std::vector<long>& key) { visited_.insert(key); }
  void observe(long state_id) { visited_.insert({state_id}); }
  void observe(const Vector& point) {
    detail::require(cell_size_ > 0.0, "continuous coverage needs a cell size");
    std::vector<long> key(static_cast<std::size_t>(point.size()));
    for (Eigen::Index i = 0; i < point.size(); ++i) key[static_cast<std::size_t>(i)] = static_cast<long>(std::floor(point[i] / cell_size_));
    visited_.insert(key);
  }

  /// Appends the current count to the curve.
  std::size_t record() {
    curve_.push_back(visited_.size());
    return visited_.size();
  }

  [[nodiscard]] std::size_t count() const { return visited_.size(); }
  [[nodiscard]] const std::vector<std::size_t>& curve() const { return curve_; }
  [[nodiscard]] bool contains(const std::vector<long>& key) const { return visited_.count(key) > 0; }

 private:
  double cell_size_;
  std::set<std::vector<long>> visited_;
  std::vector<std::size_t> curve_;
};

/// Feeds a stream of tabular states; returns the cumulative unique count after each.
inline std::vector<std::size_t> coverage_count(CoverageTracker& tracker, const std::vector<long>& states) {
  std::vector<std::size_t> out;
  for (long s : states) {
    tracker.observe(s);
    out.push_back(tracker.record());
  }
  return out;
}

inline std::vector<std::size_t> coverage_count(CoverageTracker& tracker, const std::vector<Vector>& points) {
  std::vector<std::size_t> out;
  for (const auto& p : points) {
    tracker.observe(p);
    out.push_back(tracker.record());
  }
  return out;
}

/// Mean over dimensions of the population variance of the given representations.
inline double representation_variance(const std::vector<Vector>& reps) {
  if (reps.size() < 2) throw ContractViolation("representation_variance needs at least two probes");
  const auto n = static_cast<double>(reps.size());
  Vector mean = Vector::Zero(reps.front().size());
  for (const auto& r : reps) mean += r;
  mean /= n;
  Vector var = Vector::Zero(mean.size());
  for (const auto& r : reps) var += (r - mean).cwiseAbs2();
  return (var / n).mean();
}

/// Variance of psi over the probe states.
inline double representation_variance(const ContrastiveModel& model, const std::vector<SparseVector>& probes) {
  std::vector<Vector> reps;
  reps.reserve(probes.size());
  for (const auto& p : probes) reps.push_back(model.embed_future(p));
  return representation_variance(reps);
}

}  // namespace tec
