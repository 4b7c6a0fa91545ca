#pragma once

// Dense feedforward networks with analytic gradients and an Adam optimizer.
//
// Inputs are sparse vectors so that one-hot observations cost O(nnz) in the first
// layer; every other layer is dense.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tec/error.hpp"

namespace tec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseVector = Eigen::SparseVector<double>;
using Rng = std::mt19937_64;

inline SparseVector to_sparse(const Vector& x) {
  SparseVector s(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) s.insert(i) = x[i];
  }
  return s;
}

inline Vector to_dense(const SparseVector& x) { return Vector(x); }

inline SparseVector one_hot(std::size_t size, std::size_t index) {
  SparseVector s(static_cast<Eigen::Index>(size));
  s.insert(static_cast<Eigen::Index>(index)) = 1.0;
  return s;
}

/// Concatenates the pieces into one sparse vector (dims add up).
inline SparseVector concat(std::initializer_list<const SparseVector*> parts) {
  Eigen::Index total = 0;
  Eigen::Index nnz = 0;
  for (const auto* p : parts) {
    total += p->size();
    nnz += p->nonZeros();
  }
  SparseVector out(total);
  out.reserve(nnz);
  Eigen::Index offset = 0;
  for (const auto* p : parts) {
    for (SparseVector::InnerIterator it(*p); it; ++it) out.insert(offset + it.index()) = it.value();
    offset += p->size();
  }
  return out;
}

enum class Activation : std::uint32_t { relu = 0, tanh = 1, identity = 2 };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

namespace detail {

inline void activate(Activation a, Vector& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

// Multiplies `delta` in place by the activation derivative evaluated at pre-activation `z`.
inline void activation_backward(Activation a, const Vector& z, const Vector& post, Vector& delta) {
  switch (a) {
    case Activation::relu:
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (z[i] <= 0.0) delta[i] = 0.0;
      }
      break;
    case Activation::tanh: delta.array() *= (1.0 - post.array().square()); break;
    case Activation::identity: break;
  }
}

}  // namespace detail

/// Per-parameter gradients, shape-matched to a DenseNet.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  Gradients& operator+=(const Gradients& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += other.weights[l];
      biases[l] += other.biases[l];
    }
    return *this;
  }

  Gradients& operator*=(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }

  [[nodiscard]] bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  [[nodiscard]] bool all_zero() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].isZero(0.0) || !biases[l].isZero(0.0)) return false;
    }
    return true;
  }

  [[nodiscard]] Eigen::Index size() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Layer-by-layer, row-major weights then bias; same order as DenseNet::flat_parameters.
  [[nodiscard]] Vector flatten() const {
    Vector out(size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out[k++] = weights[l](r, c);
      }
      for (Eigen::Index r = 0; r < biases[l].size(); ++r) out[k++] = biases[l][r];
    }
    return out;
  }
};

/// Activations recorded by DenseNet::forward; consumed by DenseNet::backward.
struct ForwardCache {
  SparseVector input;
  std::vector<Vector> pre;
  std::vector<Vector> post;
  const void* owner = nullptr;
  std::uint64_t generation = 0;
};

class DenseNet {
 public:
  DenseNet() = default;

  /// Scaled uniform fan-in initialization of the weights, U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// and zero biases. Random biases would swamp the signal of a wide one-hot input.
  DenseNet(std::vector<std::size_t> layer_dims, Activation hidden, Rng& rng)
      : DenseNet(std::move(layer_dims), hidden) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = u(rng);
      }
    }
  }

  /// All-zero parameters.
  DenseNet(std::vector<std::size_t> layer_dims, Activation hidden)
      : dims_(std::move(layer_dims)), hidden_(hidden) {
    detail::require(dims_.size() >= 2, "DenseNet needs at least input and output dims");
    for (auto d : dims_) detail::require(d > 0, "DenseNet layer dims must be positive");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weights_.emplace_back(Matrix::Zero(static_cast<Eigen::Index>(dims_[l + 1]),
                                         static_cast<Eigen::Index>(dims_[l])));
      biases_.emplace_back(Vector::Zero(static_cast<Eigen::Index>(dims_[l + 1])));
    }
  }

  [[nodiscard]] const std::vector<std::size_t>& layer_dims() const { return dims_; }
  [[nodiscard]] std::size_t input_dim() const { return dims_.front(); }
  [[nodiscard]] std::size_t output_dim() const { return dims_.back(); }
  [[nodiscard]] std::size_t layer_count() const { return weights_.size(); }
  [[nodiscard]] Activation hidden_activation() const { return hidden_; }

  [[nodiscard]] const Matrix& weight(std::size_t l) const { return weights_[l]; }
  [[nodiscard]] const Vector& bias(std::size_t l) const { return biases_[l]; }

  /// Mutable access invalidates outstanding forward caches.
  Matrix& mutable_weight(std::size_t l) {
    ++generation_;
    return weights_[l];
  }
  Vector& mutable_bias(std::size_t l) {
    ++generation_;
    return biases_[l];
  }

  Vector forward(const SparseVector& input, ForwardCache* cache = nullptr) const {
    if (static_cast<std::size_t>(input.size()) != input_dim()) {
      throw ConfigError("DenseNet input has dim " + std::to_string(input.size()) + ", expected " +
                        std::to_string(input_dim()));
    }
    if (cache != nullptr) {
      cache->input = input;
      cache->pre.clear();
      cache->post.clear();
      cache->owner = this;
      cache->generation = generation_;
    }
    Vector h = biases_[0];
    for (SparseVector::InnerIterator it(input); it; ++it) h.noalias() += weights_[0].col(it.index()) * it.value();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (l > 0) h = weights_[l] * h + biases_[l];
      const bool last = (l + 1 == weights_.size());
      if (cache != nullptr) cache->pre.push_back(h);
      if (!last) detail::activate(hidden_, h);
      if (cache != nullptr) cache->post.push_back(h);
    }
    return h;
  }

  Vector forward(const Vector& input, ForwardCache* cache = nullptr) const {
    return forward(SparseVector(input.sparseView(0.0, 0.0)), cache);
  }

  /// Gradient of (grad_output . output) with respect to the parameters; optionally the input gradient.
  Gradients backward(const ForwardCache& cache, const Vector& grad_output, Vector* grad_input = nullptr) const {
    Gradients g = zero_gradients();
    backward_into(cache, grad_output, g, grad_input);
    return g;
  }

  /// Adds the parameter gradient into `acc`. Only the first-layer columns touched by the
  /// sparse input are written, so accumulating many samples stays cheap.
  void backward_into(const ForwardCache& cache, const Vector& grad_output, Gradients& acc,
                     Vector* grad_input = nullptr) const {
    if (cache.owner != this || cache.generation != generation_ || cache.post.size() != weights_.size()) {
      throw ContractViolation("DenseNet::backward called with a stale or foreign forward cache");
    }
    detail::require(static_cast<std::size_t>(grad_output.size()) == output_dim(),
                    "grad_output dimension mismatch");
    detail::require(acc.weights.size() == weights_.size(), "gradient accumulator has wrong shape");
    Vector delta = grad_output;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      acc.biases[l] += delta;
      if (l > 0) {
        acc.weights[l].noalias() += delta * cache.post[l - 1].transpose();
        Vector prev = weights_[l].transpose() * delta;
        detail::activation_backward(hidden_, cache.pre[l - 1], cache.post[l - 1], prev);
        delta = std::move(prev);
      } else {
        for (SparseVector::InnerIterator it(cache.input); it; ++it) {
          acc.weights[0].col(it.index()).noalias() += delta * it.value();
        }
        if (grad_input != nullptr) *grad_input = weights_[0].transpose() * delta;
      }
    }
  }

  [[nodiscard]] Gradients zero_gradients() const {
    Gradients g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.weights.emplace_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
      g.biases.emplace_back(Vector::Zero(biases_[l].size()));
    }
    return g;
  }

  [[nodiscard]] Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  [[nodiscard]] Vector flat_parameters() const {
    Vector out(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) out[k++] = weights_[l](r, c);
      }
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) out[k++] = biases_[l][r];
    }
    return out;
  }

  void set_flat_parameters(const Vector& flat) {
    detail::require(flat.size() == parameter_count(), "flat parameter size mismatch");
    ++generation_;
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat[k++];
      }
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = flat[k++];
    }
  }

  [[nodiscard]] bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    }
    return true;
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    return a.dims_ == b.dims_ && a.hidden_ == b.hidden_ && a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  std::vector<std::size_t> dims_;
  Activation hidden_ = Activation::relu;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::uint64_t generation_ = 0;
};

/// Adam state over a flat parameter vector.
struct OptimizerState {
  Vector m;
  Vector v;
  std::uint64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  OptimizerState() = default;
  OptimizerState(Eigen::Index parameter_count, double lr)
      : m(Vector::Zero(parameter_count)), v(Vector::Zero(parameter_count)), learning_rate(lr) {}
};

/// Bias-corrected Adam update. Rejects non-finite gradients without touching the state.
inline void optimizer_step(OptimizerState& state, Vector& params, const Vector& grads) {
  detail::require(params.size() == grads.size() && state.m.size() == params.size() &&
                      state.v.size() == params.size(),
                  "optimizer_step: shape mismatch");
  if (!grads.allFinite()) throw NumericalError("optimizer_step: non-finite gradient");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
}

/// Adam step applied directly to a network.
inline void optimizer_step(OptimizerState& state, DenseNet& net, const Gradients& grads) {
  Vector p = net.flat_parameters();
  optimizer_step(state, p, grads.flatten());
  net.set_flat_parameters(p);
}

// ---------------------------------------------------------------------------
// Binary snapshot format:
//   "TECN" | u32 version | u32 layer_count | u32 dims[layer_count + 1] | u32 activation
//   then per layer: row-major f64 weights (out x in), f64 biases (out).
// Little-endian host byte order.

inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("snapshot truncated");
  return value;
}

}  // namespace detail

inline void save_snapshot(std::ostream& out, const DenseNet& net) {
  out.write("TECN", 4);
  detail::write_pod<std::uint32_t>(out, kSnapshotVersion);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_count()));
  for (auto d : net.layer_dims()) detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.hidden_activation()));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) detail::write_pod<double>(out, w(r, c));
    }
    const Vector& b = net.bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) detail::write_pod<double>(out, b[r]);
  }
}

inline DenseNet load_snapshot(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "TECN") throw ConfigError("snapshot: bad magic");
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kSnapshotVersion) throw ConfigError("snapshot: unsupported version " + std::to_string(version));
  const auto layers = detail::read_pod<std::uint32_t>(in);
  if (layers == 0 || layers > 1024) throw ConfigError("snapshot: bad layer count");
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) dims.push_back(detail::read_pod<std::uint32_t>(in));
  const auto act = detail::read_pod<std::uint32_t>(in);
  if (act > 2) throw ConfigError("snapshot: bad activation");
  DenseNet net(dims, static_cast<Activation>(act));
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix& w = net.mutable_weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = detail::read_pod<double>(in);
    }
    Vector& b = net.mutable_bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = detail::read_pod<double>(in);
  }
  return net;
}

}  // namespace tec
