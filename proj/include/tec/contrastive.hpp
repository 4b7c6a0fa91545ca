#pragma once

// Temporal contrastive model: an anchor encoder phi(s, a), a future encoder psi(s_f),
// a critic over their representations and a learned temperature.
//
// Loss normalization: InfoNCE, SymmetricInfoNCE, BinaryNCE and FlatNCE average over the K
// anchors of a batch; FB keeps its sum over anchors. The temperature divides the logits of
// the two InfoNCE variants only, and the LogSumExp penalty acts on those tempered logits
// (on the raw critic for the other losses).

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "tec/error.hpp"
#include "tec/nn.hpp"
#include "tec/trajectory.hpp"

namespace tec {

enum class CriticKind : std::uint32_t { L1 = 0, L2 = 1, L2NoSqrt = 2, Dot = 3 };
enum class LossKind { InfoNCE, SymmetricInfoNCE, BinaryNCE, FlatNCE, FB };

inline std::string to_string(CriticKind k) {
  switch (k) {
    case CriticKind::L1: return "l1";
    case CriticKind::L2: return "l2";
    case CriticKind::L2NoSqrt: return "l2_no_sqrt";
    case CriticKind::Dot: return "dot";
  }
  return "?";
}

inline CriticKind parse_critic_kind(const std::string& s) {
  for (auto k : {CriticKind::L1, CriticKind::L2, CriticKind::L2NoSqrt, CriticKind::Dot})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown critic '" + s + "' (expected l1, l2, l2_no_sqrt or dot)");
}

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::InfoNCE: return "infonce";
    case LossKind::SymmetricInfoNCE: return "symmetric_infonce";
    case LossKind::BinaryNCE: return "binary_nce";
    case LossKind::FlatNCE: return "flatnce";
    case LossKind::FB: return "fb";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  for (auto k : {LossKind::InfoNCE, LossKind::SymmetricInfoNCE, LossKind::BinaryNCE, LossKind::FlatNCE, LossKind::FB})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown loss '" + s + "' (expected infonce, symmetric_infonce, binary_nce, flatnce or fb)");
}

inline constexpr double kMinTau = 1e-3;
inline constexpr double kMaxTau = 1e3;

struct LossConfig {
  LossKind loss_kind = LossKind::InfoNCE;
  double logsumexp_coef = 0.1;

  void validate() const { detail::require(logsumexp_coef >= 0.0, "logsumexp_coef must be non-negative"); }
};

struct ContrastiveModelConfig {
  std::size_t state_dim = 1;
  /// Zero gives a state-only anchor encoder phi(s).
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t rep_dim = 16;
  Activation activation = Activation::relu;
  CriticKind critic = CriticKind::L2;
  bool normalize_reps = true;
  /// Sign of the dot critic; -1 reproduces C = -phi^T psi.
  double dot_sign = -1.0;
};

/// Critic value C(u, v) for representations u = phi(s, a), v = psi(s_f).
inline double critic_value(CriticKind kind, double dot_sign, const Vector& u, const Vector& v) {
  switch (kind) {
    case CriticKind::L1: return -(u - v).lpNorm<1>();
    case CriticKind::L2: return -(u - v).norm();
    case CriticKind::L2NoSqrt: return -(u - v).squaredNorm();
    case CriticKind::Dot: return dot_sign * u.dot(v);
  }
  return 0.0;
}

/// Accumulates scale * dC/du into du and scale * dC/dv into dv.
inline void critic_backward(CriticKind kind, double dot_sign, const Vector& u, const Vector& v, double scale,
                            Vector& du, Vector& dv) {
  switch (kind) {
    case CriticKind::L1: {
      for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double d = u[k] - v[k];
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        du[k] -= scale * s;
        dv[k] += scale * s;
      }
      break;
    }
    case CriticKind::L2: {
      const Vector d = u - v;
      const double n = d.norm();
      if (n > 0.0) {
        du.noalias() -= (scale / n) * d;
        dv.noalias() += (scale / n) * d;
      }
      break;
    }
    case CriticKind::L2NoSqrt: {
      const Vector d = u - v;
      du.noalias() -= (2.0 * scale) * d;
      dv.noalias() += (2.0 * scale) * d;
      break;
    }
    case CriticKind::Dot:
      du.noalias() += (scale * dot_sign) * v;
      dv.noalias() += (scale * dot_sign) * u;
      break;
  }
}

[[nodiscard]] inline bool is_distance_critic(CriticKind kind) { return kind != CriticKind::Dot; }

/// Entry (i, j) = C(anchors[i], futures[j]).
inline Matrix critic_matrix(CriticKind kind, double dot_sign, const std::vector<Vector>& anchors,
                            const std::vector<Vector>& futures) {
  Matrix c(static_cast<Eigen::Index>(anchors.size()), static_cast<Eigen::Index>(futures.size()));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t j = 0; j < futures.size(); ++j) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = critic_value(kind, dot_sign, anchors[i], futures[j]);
    }
  }
  return c;
}

/// Encoder output together with what is needed to backpropagate through it.
struct Embedding {
  Vector rep;
  Vector raw;
  ForwardCache cache;
};

class ContrastiveModel {
 public:
  ContrastiveModel() = default;

  ContrastiveModel(ContrastiveModelConfig config, Rng& rng) : config_(std::move(config)) {
    detail::require(config_.state_dim > 0 && config_.rep_dim > 0, "contrastive model dims must be positive");
    std::vector<std::size_t> phi_dims{config_.state_dim + config_.action_dim};
    std::vector<std::size_t> psi_dims{config_.state_dim};
    for (auto h : config_.hidden) {
      phi_dims.push_back(h);
      psi_dims.push_back(h);
    }
    phi_dims.push_back(config_.rep_dim);
    psi_dims.push_back(config_.rep_dim);
    phi = DenseNet(phi_dims, config_.activation, rng);
    psi = DenseNet(psi_dims, config_.activation, rng);
  }

  [[nodiscard]] const ContrastiveModelConfig& config() const { return config_; }
  [[nodiscard]] CriticKind critic_kind() const { return config_.critic; }
  [[nodiscard]] bool uses_action() const { return config_.action_dim > 0; }

  /// Temperature exp(log_tau) clamped to [1e-3, 1e3].
  [[nodiscard]] double tau() const { return std::clamp(std::exp(log_tau), kMinTau, kMaxTau); }

  [[nodiscard]] SparseVector anchor_input(const SparseVector& s, const Vector& a) const {
    if (!uses_action()) return s;
    detail::require(static_cast<std::size_t>(a.size()) == config_.action_dim, "action dimension mismatch");
    const SparseVector sa = to_sparse(a);
    return concat({&s, &sa});
  }

  [[nodiscard]] Embedding embed_anchor_cached(const SparseVector& s, const Vector& a) const {
    return embed(phi, anchor_input(s, a));
  }
  [[nodiscard]] Embedding embed_future_cached(const SparseVector& s) const { return embed(psi, s); }

  [[nodiscard]] Vector embed_anchor(const SparseVector& s, const Vector& a = Vector()) const {
    return embed_anchor_cached(s, a).rep;
  }
  [[nodiscard]] Vector embed_future(const SparseVector& s) const { return embed_future_cached(s).rep; }

  [[nodiscard]] double similarity(const Vector& u, const Vector& v) const {
    return critic_value(config_.critic, config_.dot_sign, u, v);
  }

  /// Gradient of the loss with respect to the encoder parameters given dL/drep.
  Gradients backprop(const DenseNet& net, const Embedding& e, const Vector& grad_rep) const {
    Gradients g = net.zero_gradients();
    backprop_into(net, e, grad_rep, g);
    return g;
  }

  void backprop_into(const DenseNet& net, const Embedding& e, const Vector& grad_rep, Gradients& acc) const {
    if (config_.normalize_reps) {
      const double n = e.raw.norm();
      net.backward_into(e.cache, (grad_rep - e.rep * e.rep.dot(grad_rep)) / n, acc);
    } else {
      net.backward_into(e.cache, grad_rep, acc);
    }
  }

  DenseNet phi;
  DenseNet psi;
  double log_tau = 0.0;

 private:
  Embedding embed(const DenseNet& net, const SparseVector& input) const {
    Embedding e;
    e.raw = net.forward(input, &e.cache);
    if (!e.raw.allFinite()) throw NumericalError("encoder produced non-finite activations");
    if (config_.normalize_reps) {
      const double n = e.raw.norm();
      if (!(n > 0.0)) throw NumericalError("cannot normalize a zero representation");
      e.rep = e.raw / n;
    } else {
      e.rep = e.raw;
    }
    return e;
  }

  ContrastiveModelConfig config_;
};

/// Loss value and its gradient with respect to the critic matrix and log temperature.
struct CriticLoss {
  double loss = 0.0;
  Matrix grad_critic;
  double grad_log_tau = 0.0;
};

namespace detail {

inline double log_sum_exp(const Eigen::Ref<const Vector>& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

/// Evaluates the configured loss on a K x K critic matrix (rows: anchors, columns: futures,
/// positives on the diagonal). `frozen` supplies the stop-gradient copy used by FlatNCE's
/// denominator; when absent the denominator equals the live value.
inline CriticLoss contrastive_loss(const Matrix& critic, double log_tau, const LossConfig& config,
                                   const Matrix* frozen = nullptr) {
  const Eigen::Index k = critic.rows();
  detail::require(k >= 1 && critic.cols() == k, "critic matrix must be square and non-empty");
  if (config.loss_kind == LossKind::BinaryNCE && k == 1) {
    throw ConfigError("BinaryNCE needs at least one negative (batch size >= 2)");
  }
  if (!critic.allFinite()) throw NumericalError("critic matrix is not finite");
  const double kd = static_cast<double>(k);
  CriticLoss out;
  out.grad_critic = Matrix::Zero(k, k);

  switch (config.loss_kind) {
    case LossKind::InfoNCE:
    case LossKind::SymmetricInfoNCE: {
      const double tau = std::clamp(std::exp(log_tau), kMinTau, kMaxTau);
      const bool tau_free = std::exp(log_tau) > kMinTau && std::exp(log_tau) < kMaxTau;
      const Matrix logits = critic / tau;
      Matrix grad_logits = Matrix::Zero(k, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        const Vector row = logits.row(i).transpose();
        const double lse = detail::log_sum_exp(row);
        out.loss += (lse - logits(i, i)) / kd;
        grad_logits.row(i) += ((row.array() - lse).exp().matrix().transpose()) / kd;
        grad_logits(i, i) -= 1.0 / kd;
      }
      if (config.loss_kind == LossKind::SymmetricInfoNCE) {
        for (Eigen::Index j = 0; j < k; ++j) {
          const Vector col = logits.col(j);
          const double lse = detail::log_sum_exp(col);
          out.loss += (lse - logits(j, j)) / kd;
          grad_logits.col(j) += (col.array() - lse).exp().matrix() / kd;
          grad_logits(j, j) -= 1.0 / kd;
        }
      }
      out.grad_critic = grad_logits / tau;
      if (tau_free) out.grad_log_tau = -(grad_logits.cwiseProduct(logits)).sum();
      break;
    }
    case LossKind::BinaryNCE: {
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
          const double c = critic(i, j);
          if (i == j) {
            out.loss += detail::softplus(-c) / kd;
            out.grad_critic(i, j) = (detail::sigmoid(c) - 1.0) / kd;
          } else {
            out.loss += detail::softplus(c) / kd;
            out.grad_critic(i, j) = detail::sigmoid(c) / kd;
          }
        }
      }
      break;
    }
    case LossKind::FlatNCE: {
      for (Eigen::Index i = 0; i < k; ++i) {
        const Vector shifted = (critic.row(i).array() - critic(i, i)).matrix().transpose();
        const double log_s = detail::log_sum_exp(shifted);
        double log_s_frozen = log_s;
        if (frozen != nullptr) {
          const Vector fs = (frozen->row(i).array() - (*frozen)(i, i)).matrix().transpose();
          log_s_frozen = detail::log_sum_exp(fs);
        }
        out.loss += (log_s - log_s_frozen) / kd;
        const Vector w = (shifted.array() - log_s).exp().matrix();
        out.grad_critic.row(i) = w.transpose() / kd;
        out.grad_critic(i, i) -= 1.0 / kd;
      }
      break;
    }
    case LossKind::FB: {
      const double pair_scale = k > 1 ? 1.0 / (2.0 * (kd - 1.0)) : 0.0;
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
          const double e = std::exp(critic(i, j));
          if (i == j) {
            out.loss -= e;
            out.grad_critic(i, j) = -e;
          } else {
            out.loss += pair_scale * e * e;
            out.grad_critic(i, j) = 2.0 * pair_scale * e * e;
          }
        }
      }
      break;
    }
  }

  if (config.logsumexp_coef > 0.0) {
    // On the tempered logits for the InfoNCE variants, on the raw critic otherwise.
    const bool tempered = config.loss_kind == LossKind::InfoNCE || config.loss_kind == LossKind::SymmetricInfoNCE;
    const double tau = tempered ? std::clamp(std::exp(log_tau), kMinTau, kMaxTau) : 1.0;
    const bool tau_free = tempered && std::exp(log_tau) > kMinTau && std::exp(log_tau) < kMaxTau;
    for (Eigen::Index i = 0; i < k; ++i) {
      const Vector row = critic.row(i).transpose() / tau;
      const double lse = detail::log_sum_exp(row);
      out.loss += config.logsumexp_coef * lse * lse / kd;
      const Vector g = (2.0 * config.logsumexp_coef * lse / kd) * (row.array() - lse).exp().matrix();
      out.grad_critic.row(i) += g.transpose() / tau;
      if (tau_free) out.grad_log_tau -= g.dot(row);
    }
  }
  if (!std::isfinite(out.loss)) throw NumericalError("contrastive loss is not finite");
  return out;
}

struct LossResult {
  double loss = 0.0;
  Gradients phi;
  Gradients psi;
  double log_tau = 0.0;
  Matrix critic;
};

/// Critic matrix of a batch under the model.
inline Matrix batch_critic_matrix(const ContrastiveModel& model, const ContrastiveBatch& batch) {
  std::vector<Vector> u;
  std::vector<Vector> v;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    u.push_back(model.embed_anchor(batch.anchor_states[i], batch.anchor_actions[i]));
    v.push_back(model.embed_future(batch.futures[i]));
  }
  return critic_matrix(model.critic_kind(), model.config().dot_sign, u, v);
}

/// Loss value only; `frozen` as in contrastive_loss.
inline double loss_value(const ContrastiveModel& model, const ContrastiveBatch& batch, const LossConfig& config,
                         const Matrix* frozen = nullptr) {
  return contrastive_loss(batch_critic_matrix(model, batch), model.log_tau, config, frozen).loss;
}

inline LossResult loss_and_grads(const ContrastiveModel& model, const ContrastiveBatch& batch,
                                 const LossConfig& config) {
  const std::size_t k = batch.size();
  detail::require(k >= 1, "loss_and_grads: empty batch");
  std::vector<Embedding> anchors;
  std::vector<Embedding> futures;
  anchors.reserve(k);
  futures.reserve(k);
  std::vector<Vector> u;
  std::vector<Vector> v;
  for (std::size_t i = 0; i < k; ++i) {
    anchors.push_back(model.embed_anchor_cached(batch.anchor_states[i], batch.anchor_actions[i]));
    futures.push_back(model.embed_future_cached(batch.futures[i]));
    u.push_back(anchors.back().rep);
    v.push_back(futures.back().rep);
  }
  LossResult result;
  result.critic = critic_matrix(model.critic_kind(), model.config().dot_sign, u, v);
  const CriticLoss cl = contrastive_loss(result.critic, model.log_tau, config);
  result.loss = cl.loss;
  result.log_tau = cl.grad_log_tau;

  const auto d = static_cast<Eigen::Index>(model.config().rep_dim);
  std::vector<Vector> du(k, Vector::Zero(d));
  std::vector<Vector> dv(k, Vector::Zero(d));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double g = cl.grad_critic(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (g != 0.0) critic_backward(model.critic_kind(), model.config().dot_sign, u[i], v[j], g, du[i], dv[j]);
    }
  }
  result.phi = model.phi.zero_gradients();
  result.psi = model.psi.zero_gradients();
  for (std::size_t i = 0; i < k; ++i) {
    model.backprop_into(model.phi, anchors[i], du[i], result.phi);
    model.backprop_into(model.psi, futures[i], dv[i], result.psi);
  }
  return result;
}

/// Single network over the concatenated (s, a, s_f) triple with a scalar output.
class MonolithicCritic {
 public:
  MonolithicCritic() = default;
  MonolithicCritic(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                   Activation activation, Rng& rng)
      : state_dim_(state_dim), action_dim_(action_dim) {
    std::vector<std::size_t> dims{2 * state_dim + action_dim};
    for (auto h : hidden) dims.push_back(h);
    dims.push_back(1);
    net = DenseNet(dims, activation, rng);
  }

  [[nodiscard]] SparseVector input(const SparseVector& s, const Vector& a, const SparseVector& sf) const {
    const SparseVector sa = to_sparse(a);
    return concat({&s, &sa, &sf});
  }

  [[nodiscard]] double score(const SparseVector& s, const Vector& a, const SparseVector& sf) const {
    return net.forward(input(s, a, sf))[0];
  }

  [[nodiscard]] double tau() const { return std::clamp(std::exp(log_tau), kMinTau, kMaxTau); }

  DenseNet net;
  double log_tau = 0.0;

 private:
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
};

struct MonolithicLossResult {
  double loss = 0.0;
  Gradients net;
  double log_tau = 0.0;
};

inline Matrix batch_critic_matrix(const MonolithicCritic& critic, const ContrastiveBatch& batch) {
  const auto k = static_cast<Eigen::Index>(batch.size());
  Matrix c(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      c(i, j) = critic.score(batch.anchor_states[i], batch.anchor_actions[i], batch.futures[j]);
    }
  }
  return c;
}

inline MonolithicLossResult loss_and_grads(const MonolithicCritic& critic, const ContrastiveBatch& batch,
                                           const LossConfig& config) {
  const auto k = static_cast<Eigen::Index>(batch.size());
  std::vector<ForwardCache> caches(static_cast<std::size_t>(k * k));
  Matrix c(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      auto& cache = caches[static_cast<std::size_t>(i * k + j)];
      c(i, j) = critic.net.forward(critic.input(batch.anchor_states[i], batch.anchor_actions[i], batch.futures[j]),
                                   &cache)[0];
    }
  }
  const CriticLoss cl = contrastive_loss(c, critic.log_tau, config);
  MonolithicLossResult out;
  out.loss = cl.loss;
  out.log_tau = cl.grad_log_tau;
  out.net = critic.net.zero_gradients();
  Vector g(1);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      g[0] = cl.grad_critic(i, j);
      if (g[0] != 0.0) critic.net.backward_into(caches[static_cast<std::size_t>(i * k + j)], g, out.net);
    }
  }
  return out;
}

/// Owns a separable model and its Adam state over [phi, psi, log_tau].
class ContrastiveLearner {
 public:
  ContrastiveLearner() = default;
  ContrastiveLearner(ContrastiveModel model, double learning_rate, bool learn_temperature = true)
      : model_(std::move(model)), learn_temperature_(learn_temperature) {
    state_ = OptimizerState(model_.phi.parameter_count() + model_.psi.parameter_count() + 1, learning_rate);
  }

  /// One gradient step; returns the pre-step loss.
  double update(const ContrastiveBatch& batch, const LossConfig& config) {
    const LossResult r = loss_and_grads(model_, batch, config);
    const Eigen::Index np = model_.phi.parameter_count();
    const Eigen::Index nq = model_.psi.parameter_count();
    Vector params(np + nq + 1);
    params << model_.phi.flat_parameters(), model_.psi.flat_parameters(), model_.log_tau;
    Vector grads(np + nq + 1);
    grads << r.phi.flatten(), r.psi.flatten(), (learn_temperature_ ? r.log_tau : 0.0);
    optimizer_step(state_, params, grads);
    model_.phi.set_flat_parameters(params.head(np));
    model_.psi.set_flat_parameters(params.segment(np, nq));
    if (learn_temperature_) {
      model_.log_tau = std::clamp(params[np + nq], std::log(kMinTau), std::log(kMaxTau));
    }
    return r.loss;
  }

  [[nodiscard]] const ContrastiveModel& model() const { return model_; }
  ContrastiveModel& model() { return model_; }

 private:
  ContrastiveModel model_;
  OptimizerState state_;
  bool learn_temperature_ = true;
};

class MonolithicLearner {
 public:
  MonolithicLearner() = default;
  MonolithicLearner(MonolithicCritic critic, double learning_rate, bool learn_temperature = true)
      : critic_(std::move(critic)), learn_temperature_(learn_temperature) {
    state_ = OptimizerState(critic_.net.parameter_count() + 1, learning_rate);
  }

  double update(const ContrastiveBatch& batch, const LossConfig& config) {
    const MonolithicLossResult r = loss_and_grads(critic_, batch, config);
    const Eigen::Index n = critic_.net.parameter_count();
    Vector params(n + 1);
    params << critic_.net.flat_parameters(), critic_.log_tau;
    Vector grads(n + 1);
    grads << r.net.flatten(), (learn_temperature_ ? r.log_tau : 0.0);
    optimizer_step(state_, params, grads);
    critic_.net.set_flat_parameters(params.head(n));
    if (learn_temperature_) critic_.log_tau = std::clamp(params[n], std::log(kMinTau), std::log(kMaxTau));
    return r.loss;
  }

  [[nodiscard]] const MonolithicCritic& critic() const { return critic_; }

 private:
  MonolithicCritic critic_;
  OptimizerState state_;
  bool learn_temperature_ = true;
};

// Checkpoint: TECN(phi) | TECN(psi) | f64 log_tau | u32 critic | u8 normalize | f64 dot_sign.
inline void save_checkpoint(std::ostream& out, const ContrastiveModel& model) {
  save_snapshot(out, model.phi);
  save_snapshot(out, model.psi);
  detail::write_pod<double>(out, model.log_tau);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.critic_kind()));
  detail::write_pod<std::uint8_t>(out, model.config().normalize_reps ? 1 : 0);
  detail::write_pod<double>(out, model.config().dot_sign);
}

inline ContrastiveModel load_checkpoint(std::istream& in) {
  DenseNet phi = load_snapshot(in);
  DenseNet psi = load_snapshot(in);
  const double log_tau = detail::read_pod<double>(in);
  const auto critic = detail::read_pod<std::uint32_t>(in);
  if (critic > 3) throw ConfigError("checkpoint: bad critic kind");
  const auto normalize = detail::read_pod<std::uint8_t>(in);
  const double dot_sign = detail::read_pod<double>(in);
  detail::require(phi.output_dim() == psi.output_dim(), "checkpoint: encoder output dims differ");
  ContrastiveModelConfig cfg;
  cfg.state_dim = psi.input_dim();
  detail::require(phi.input_dim() >= psi.input_dim(), "checkpoint: anchor encoder narrower than future encoder");
  cfg.action_dim = phi.input_dim() - psi.input_dim();
  cfg.rep_dim = psi.output_dim();
  cfg.hidden.assign(psi.layer_dims().begin() + 1, psi.layer_dims().end() - 1);
  cfg.activation = psi.hidden_activation();
  cfg.critic = static_cast<CriticKind>(critic);
  cfg.normalize_reps = normalize != 0;
  cfg.dot_sign = dot_sign;
  Rng rng(0);
  ContrastiveModel model(cfg, rng);
  model.phi = std::move(phi);
  model.psi = std::move(psi);
  model.log_tau = log_tau;
  return model;
}

}  // namespace tec
