#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tec/nn.hpp"

using namespace tec;

namespace {

// Straight-line re-evaluation of a dense net, one scalar at a time.
std::vector<double> naive_forward(const DenseNet& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weight(l);
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double acc = net.bias(l)[r];
      for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * x[static_cast<std::size_t>(c)];
      if (l + 1 < net.layer_count()) {
        if (net.hidden_activation() == Activation::relu) acc = acc > 0.0 ? acc : 0.0;
        if (net.hidden_activation() == Activation::tanh) acc = std::tanh(acc);
      }
      y[static_cast<std::size_t>(r)] = acc;
    }
    x = std::move(y);
  }
  return x;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(DenseNet, ZeroNetGivesZeroOutput) {
  DenseNet net({5, 8, 3}, Activation::relu);
  Vector x = Vector::Random(5);
  EXPECT_TRUE(net.forward(x).isZero(0.0));
}

TEST(DenseNet, SingleLinearUnit) {
  DenseNet net({1, 1}, Activation::identity);
  net.mutable_weight(0)(0, 0) = 1.0;
  Vector x(1);
  x << 2.0;
  EXPECT_DOUBLE_EQ(net.forward(x)[0], 2.0);
}

TEST(DenseNet, MatchesScalarReevaluation) {
  for (auto act : {Activation::relu, Activation::tanh, Activation::identity}) {
    Rng rng(7);
    DenseNet net({6, 9, 7, 4}, act, rng);
    for (std::size_t l = 0; l < net.layer_count(); ++l) net.mutable_bias(l) = Vector::Random(net.bias(l).size());
    Vector x = Vector::Random(6);
    const Vector y = net.forward(x);
    const auto ref = naive_forward(net, std::vector<double>(x.data(), x.data() + x.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(DenseNet, InputDimensionMismatchIsConfigError) {
  DenseNet net({3, 2}, Activation::relu);
  EXPECT_THROW(net.forward(Vector(Vector::Zero(4))), ConfigError);
}

TEST(DenseNet, InitIsFanInBoundedWithZeroBias) {
  Rng rng(1);
  DenseNet net({100, 20, 5}, Activation::relu, rng);
  EXPECT_LE(net.weight(0).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(net.weight(1).cwiseAbs().maxCoeff(), 1.0 / std::sqrt(20.0));
  EXPECT_TRUE(net.bias(0).isZero(0.0));
  EXPECT_TRUE(net.weight(0).allFinite());
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  DenseNet net({4, 8, 3}, Activation::tanh, rng);
  ForwardCache cache;
  net.forward(Vector(Vector::Random(4)), &cache);
  EXPECT_TRUE(net.backward(cache, Vector::Zero(3)).all_zero());
}

TEST(Backward, LinearUnitAnalytic) {
  DenseNet net({1, 1}, Activation::identity);
  net.mutable_weight(0)(0, 0) = 0.5;
  ForwardCache cache;
  Vector x(1);
  x << 3.0;
  net.forward(x, &cache);
  Vector g(1);
  g << 1.0;
  const Gradients grads = net.backward(cache, g);
  EXPECT_DOUBLE_EQ(grads.weights[0](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(grads.biases[0][0], 1.0);
}

TEST(Backward, StaleCacheIsContractViolation) {
  Rng rng(3);
  DenseNet net({2, 2}, Activation::relu, rng);
  ForwardCache cache;
  net.forward(Vector(Vector::Ones(2)), &cache);
  net.mutable_bias(0)[0] += 1.0;
  EXPECT_THROW(net.backward(cache, Vector::Ones(2)), ContractViolation);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(11);
  for (auto act : {Activation::tanh, Activation::identity, Activation::relu}) {
    DenseNet net({5, 7, 6, 3}, act, rng);
    for (std::size_t l = 0; l < net.layer_count(); ++l) net.mutable_bias(l) = 0.3 * Vector::Random(net.bias(l).size());
    const Vector x = Vector::Random(5);
    const Vector upstream = Vector::Random(3);
    ForwardCache cache;
    net.forward(x, &cache);
    Vector grad_x;
    const Vector analytic = net.backward(cache, upstream, &grad_x).flatten();

    const Vector theta = net.flat_parameters();
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector p = theta;
      p[i] += h;
      net.set_flat_parameters(p);
      const double up = upstream.dot(net.forward(x));
      p[i] -= 2 * h;
      net.set_flat_parameters(p);
      const double down = upstream.dot(net.forward(x));
      worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h)));
    }
    net.set_flat_parameters(theta);
    EXPECT_LE(worst, 1e-4) << to_string(act);
    if (act != Activation::relu) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (upstream.dot(net.forward(xp)) - upstream.dot(net.forward(xm))) / (2 * h);
        EXPECT_LE(rel_err(grad_x[i], fd), 1e-4);
      }
    }
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  OptimizerState st(3, 1e-2);
  Vector p = Vector::Random(3);
  const Vector before = p;
  optimizer_step(st, p, Vector::Zero(3));
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepHasMagnitudeLearningRate) {
  OptimizerState st(1, 1e-3);
  Vector p(1);
  p << 0.5;
  Vector g(1);
  g << -42.0;
  optimizer_step(st, p, g);
  EXPECT_NEAR(p[0] - 0.5, 1e-3, 1e-9);
}

TEST(Adam, DecreasesQuadratic) {
  OptimizerState st(1, 0.1);
  Vector x(1);
  x << 1.0;
  double f = x[0] * x[0];
  for (int k = 0; k < 3; ++k) {
    optimizer_step(st, x, Vector(2.0 * x));
    const double next = x[0] * x[0];
    EXPECT_LT(next, f);
    f = next;
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(Adam, RejectsNonFiniteGradient) {
  OptimizerState st(2, 0.1);
  Vector p = Vector::Ones(2);
  Vector g = Vector::Ones(2);
  g[1] = std::nan("");
  EXPECT_THROW(optimizer_step(st, p, g), NumericalError);
  EXPECT_EQ(st.step, 0u);
  EXPECT_EQ(p, Vector(Vector::Ones(2)));
}

TEST(Adam, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(5);
    DenseNet net({4, 6, 2}, Activation::relu, rng);
    OptimizerState st(net.parameter_count(), 1e-2);
    for (int k = 0; k < 20; ++k) {
      ForwardCache cache;
      Vector x = Vector::Zero(4);
      x[k % 4] = 1.0;
      net.forward(x, &cache);
      optimizer_step(st, net, net.backward(cache, Vector::Ones(2)));
    }
    return net;
  };
  EXPECT_TRUE(run() == run());
}

TEST(Snapshot, RoundTrip) {
  Rng rng(9);
  DenseNet net({3, 5, 2}, Activation::tanh, rng);
  std::stringstream buf;
  save_snapshot(buf, net);
  EXPECT_EQ(buf.str().substr(0, 4), "TECN");
  const DenseNet back = load_snapshot(buf);
  EXPECT_TRUE(back == net);
}

TEST(Snapshot, RejectsBadMagic) {
  std::stringstream buf("NOPE....");
  EXPECT_THROW(load_snapshot(buf), ConfigError);
}

TEST(Sparse, OneHotAndConcat) {
  const SparseVector a = one_hot(3, 1);
  const SparseVector b = one_hot(2, 0);
  const Vector c = to_dense(concat({&a, &b}));
  Vector expected(5);
  expected << 0, 1, 0, 1, 0;
  EXPECT_EQ(c, expected);
}
