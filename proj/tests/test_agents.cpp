#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tec/agents.hpp"

using namespace tec;

namespace {

PolicySample make_sample(const Policy& policy, const SparseVector& obs, long id, const Action& a, double adv) {
  PolicySample x;
  x.obs = obs;
  x.state_id = id;
  x.action = a;
  x.advantage = adv;
  x.old_log_prob = policy.log_prob(obs, id, a) + 0.05;
  return x;
}

Action discrete_action(std::size_t n, long i) {
  Action a;
  a.index = i;
  a.encoding = Vector::Zero(static_cast<Eigen::Index>(n));
  a.encoding[i] = 1.0;
  return a;
}

// Central differences of the surrogate loss over every flat parameter.
double max_gradient_error(Policy& policy, const std::vector<PolicySample>& batch, const PolicyUpdateConfig& cfg) {
  const Vector analytic = surrogate_gradient(policy, batch, cfg);
  const Vector base = policy.flat_parameters();
  double worst = 0.0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector p = base;
    p[i] += h;
    policy.set_flat_parameters(p);
    const double up = surrogate_loss(policy, batch, cfg);
    p[i] -= 2.0 * h;
    policy.set_flat_parameters(p);
    const double down = surrogate_loss(policy, batch, cfg);
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(numeric)));
  }
  policy.set_flat_parameters(base);
  return worst;
}

}  // namespace

TEST(Policy, UniformLogitsSampleUniformly) {
  const Policy p = Policy::tabular(1, 4);
  Rng rng(1);
  std::vector<double> freq(4, 0.0);
  const int n = 100'000;
  for (int i = 0; i < n; ++i) freq[static_cast<std::size_t>(p.sample(one_hot(1, 0), 0, rng).index)] += 1.0 / n;
  for (double f : freq) EXPECT_NEAR(f, 0.25, 0.01);
}

TEST(Policy, DominantLogitIsAlmostAlwaysChosen) {
  Policy p = Policy::tabular(1, 4);
  p.logits(0, 2) = 50.0;
  Rng rng(2);
  int hits = 0;
  for (int i = 0; i < 10'000; ++i) hits += p.sample(one_hot(1, 0), 0, rng).index == 2 ? 1 : 0;
  EXPECT_GT(hits / 10'000.0, 0.999);
  EXPECT_EQ(p.mode(one_hot(1, 0), 0).index, 2);
}

TEST(Policy, NarrowGaussianStaysAtTheMean) {
  Rng rng(3);
  Policy p = Policy::gaussian(2, 2, {8}, rng, -10.0);
  SparseVector obs = to_sparse(Vector::Constant(2, 0.3));
  const Vector mean = p.head(obs, -1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT((p.sample(obs, -1, rng).encoding - mean).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(PolicyUpdate, ZeroAdvantageLeavesParametersUnchanged) {
  Rng rng(4);
  Policy p = Policy::categorical(3, 2, {6}, rng);
  const Vector before = p.flat_parameters();
  std::vector<PolicySample> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(make_sample(p, one_hot(3, i % 3), -1, discrete_action(2, i % 2), 0.0));
  OptimizerState opt(p.parameter_count(), 0.1);
  policy_update(p, opt, batch, PolicyUpdateConfig{0.1, 0.0, false, 0.2});
  EXPECT_EQ(p.flat_parameters(), before);
}

TEST(PolicyUpdate, PositiveAdvantageRaisesProbability) {
  Policy p = Policy::tabular(2, 3);
  const SparseVector obs = one_hot(2, 1);
  const double before = p.probabilities(obs, 1)[2];
  std::vector<PolicySample> batch{make_sample(p, obs, 1, discrete_action(3, 2), 1.0)};
  OptimizerState opt(p.parameter_count(), 0.05);
  policy_update(p, opt, batch, PolicyUpdateConfig{0.05, 0.0, false, 0.2});
  EXPECT_GT(p.probabilities(obs, 1)[2], before);
  EXPECT_NEAR(p.probabilities(one_hot(2, 0), 0)[0], 1.0 / 3.0, 1e-15);
}

TEST(PolicyUpdate, SurrogateGradientMatchesFiniteDifferences) {
  Rng rng(5);
  std::uniform_real_distribution<double> adv(-2.0, 2.0);
  for (bool clip : {false, true}) {
    for (double entropy : {0.0, 0.05}) {
      const PolicyUpdateConfig cfg{0.01, entropy, clip, 0.2};

      Policy tab = Policy::tabular(3, 2);
      tab.logits = Matrix::Random(3, 2);
      std::vector<PolicySample> tb;
      for (long i = 0; i < 6; ++i) tb.push_back(make_sample(tab, one_hot(3, i % 3), i % 3, discrete_action(2, i % 2), adv(rng)));
      EXPECT_LT(max_gradient_error(tab, tb, cfg), 1e-6) << "tabular clip=" << clip;

      Policy cat = Policy::categorical(4, 3, {5}, rng);
      std::vector<PolicySample> cb;
      for (long i = 0; i < 6; ++i) {
        cb.push_back(make_sample(cat, to_sparse(Vector::Random(4)), -1, discrete_action(3, i % 3), adv(rng)));
      }
      EXPECT_LT(max_gradient_error(cat, cb, cfg), 1e-6) << "categorical clip=" << clip;

      Policy gau = Policy::gaussian(3, 2, {5}, rng);
      std::vector<PolicySample> gb;
      for (long i = 0; i < 6; ++i) {
        Action a;
        a.encoding = Vector::Random(2);
        gb.push_back(make_sample(gau, to_sparse(Vector::Random(3)), -1, a, adv(rng)));
      }
      EXPECT_LT(max_gradient_error(gau, gb, cfg), 1e-6) << "gaussian clip=" << clip;
    }
  }
}

TEST(PolicyUpdate, RecoversTheGreedyActionOfAHandSetReward) {
  // Two states, two actions; action 0 stays, action 1 switches. Reward 1 only for staying in state 1.
  const double gamma = 0.9;
  const double reward[2][2] = {{0.0, 0.0}, {1.0, 0.0}};
  const std::size_t next[2][2] = {{0, 1}, {1, 0}};
  double q[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (int it = 0; it < 2000; ++it) {
    double v[2];
    for (int s = 0; s < 2; ++s) v[s] = std::max(q[s][0], q[s][1]);
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) q[s][a] = reward[s][a] + gamma * v[next[s][a]];
    }
  }

  Policy p = Policy::tabular(2, 2);
  OptimizerState opt(p.parameter_count(), 0.05);
  Rng rng(6);
  for (int epoch = 0; epoch < 300; ++epoch) {
    std::vector<PolicySample> batch;
    std::vector<double> returns;
    for (int e = 0; e < 8; ++e) {
      std::size_t s = static_cast<std::size_t>(e % 2);
      std::vector<PolicySample> episode;
      std::vector<double> r;
      for (int t = 0; t < 20; ++t) {
        const SparseVector obs = one_hot(2, s);
        const Action a = p.sample(obs, static_cast<long>(s), rng);
        episode.push_back(make_sample(p, obs, static_cast<long>(s), a, 0.0));
        r.push_back(reward[s][a.index]);
        s = next[s][a.index];
      }
      double g = 0.0;
      for (std::size_t t = r.size(); t-- > 0;) {
        g = r[t] + gamma * g;
        episode[t].advantage = g;
      }
      batch.insert(batch.end(), episode.begin(), episode.end());
    }
    double mean = 0.0;
    for (const auto& x : batch) mean += x.advantage / static_cast<double>(batch.size());
    for (auto& x : batch) x.advantage -= mean;
    policy_update(p, opt, batch, PolicyUpdateConfig{0.05, 0.0, false, 0.2});
  }
  for (std::size_t s = 0; s < 2; ++s) {
    const long greedy = q[s][0] >= q[s][1] ? 0 : 1;
    EXPECT_EQ(p.mode(one_hot(2, s), static_cast<long>(s)).index, greedy) << "state " << s;
  }
}

TEST(Train, ZeroEpisodesLeavesThePolicyAtInit) {
  TabularEnv env(build_bandit_mdp());
  TrainConfig c;
  c.total_episodes = 0;
  c.reward.source = RewardSource::Count;
  const auto art = train(env, c);
  EXPECT_TRUE(art.metrics.empty());
  EXPECT_TRUE(art.policy.logits.isZero());
}

TEST(Train, IsDeterministicGivenTheSeed) {
  TrainConfig c;
  c.total_episodes = 800;
  c.reward.source = RewardSource::None;
  c.seed = 11;
  TabularEnv a(build_tree_mdp(2));
  TabularEnv b(build_tree_mdp(2));
  const auto x = train(a, c);
  const auto y = train(b, c);
  EXPECT_EQ(x.policy.logits, y.policy.logits);
  EXPECT_EQ(x.recent_visitation, y.recent_visitation);
  std::ostringstream sx, sy;
  write_metrics_csv(sx, x.metrics);
  write_metrics_csv(sy, y.metrics);
  EXPECT_EQ(sx.str(), sy.str());
}

TEST(Train, ContrastiveRunIsDeterministicAndCoverageMonotone) {
  TrainConfig c;
  c.total_episodes = 40;
  c.reward.source = RewardSource::CTeC;
  c.critic_hidden = {16};
  c.seed = 3;
  GridworldEnv a(default_gridworld(2, 12), 9);
  GridworldEnv b(default_gridworld(2, 12), 9);
  const auto x = train(a, c);
  const auto y = train(b, c);
  ASSERT_EQ(x.metrics.size(), 5u);
  for (std::size_t i = 0; i < x.metrics.size(); ++i) {
    EXPECT_EQ(x.metrics[i].contrastive_loss, y.metrics[i].contrastive_loss);
    EXPECT_TRUE(std::isfinite(x.metrics[i].rep_variance));
    if (i > 0) {
      EXPECT_GE(x.metrics[i].coverage, x.metrics[i - 1].coverage);
    }
  }
  EXPECT_EQ(x.policy.flat_parameters(), y.policy.flat_parameters());
  EXPECT_LE(x.coverage_curve.back(), x.reachable);
}

TEST(Train, EveryRewardSourceRunsOnATabularEnvironment) {
  for (const char* name : {"ctec", "forward_kl", "reverse_kl", "count", "rnd", "icm", "etd", "none"}) {
    TrainConfig c;
    c.total_episodes = 16;
    c.reward.source = parse_reward_source(name);
    TabularEnv env(build_tree_mdp(2));
    const auto art = train(env, c);
    EXPECT_EQ(art.metrics.size(), 2u) << name;
    EXPECT_TRUE(std::isfinite(art.metrics.back().mean_r_intr)) << name;
  }
}

TEST(Train, OracleRewardsNeedATabularEnvironment) {
  TrainConfig c;
  c.total_episodes = 8;
  c.reward.source = RewardSource::ReverseKL;
  PointMazeEnv env(default_point_maze());
  EXPECT_THROW(train(env, c), UnsupportedConfiguration);
}

TEST(Train, PointMazeRunsWithAGaussianPolicy) {
  TrainConfig c;
  c.total_episodes = 8;
  c.reward.source = RewardSource::CTeC;
  c.critic_hidden = {16};
  c.coverage_cell = 0.25;
  PointMazeEnv env(default_point_maze());
  const auto art = train(env, c);
  EXPECT_EQ(art.policy.kind(), PolicyKind::MlpGaussian);
  EXPECT_GE(art.metrics.back().coverage, 1u);
}

TEST(Metrics, CsvHeaderAndRow) {
  IterationMetrics m;
  m.iter = 2;
  m.episodes = 24;
  m.coverage = 7;
  m.contrastive_loss = 1.5;
  m.mean_r_intr = -0.25;
  std::ostringstream out;
  write_metrics_csv(out, {m});
  EXPECT_EQ(out.str(), "iter,episodes,coverage,contrastive_loss,mean_r_intr,rep_variance,tau\n2,24,7,1.5,-0.25,nan,nan\n");
}
