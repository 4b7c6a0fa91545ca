#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <random>
#include <vector>

#include "tec/environments.hpp"

namespace tec::testing {

inline double total_variation(const Vector& p, const Vector& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

/// Histogram of s_Delta for Delta ~ Geom(1 - gamma) on {0, 1, ...}, starting from s with first
/// action a and following `policy` (rows of action probabilities) afterwards.
inline Vector monte_carlo_sa_occupancy(const TabularMDP& mdp, const Matrix& policy, double gamma, std::size_t s,
                                       std::size_t a, std::size_t rollouts, Rng& rng) {
  Vector hist = Vector::Zero(static_cast<Eigen::Index>(mdp.n_states));
  std::geometric_distribution<std::size_t> horizon(1.0 - gamma);
  std::vector<std::discrete_distribution<std::size_t>> act;
  // Sparse rows so that large deterministic MDPs stay cheap to simulate.
  std::vector<std::vector<std::discrete_distribution<std::size_t>>> next(mdp.n_states);
  std::vector<std::vector<std::vector<std::size_t>>> support(mdp.n_states);
  for (std::size_t k = 0; k < mdp.n_states; ++k) {
    const Vector row = policy.row(static_cast<Eigen::Index>(k)).transpose();
    act.emplace_back(row.data(), row.data() + row.size());
    for (std::size_t b = 0; b < mdp.n_actions; ++b) {
      std::vector<std::size_t> ids;
      std::vector<double> w;
      const Vector& p = mdp.row(k, b);
      for (Eigen::Index j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) {
          ids.push_back(static_cast<std::size_t>(j));
          w.push_back(p[j]);
        }
      }
      support[k].push_back(ids);
      next[k].emplace_back(w.begin(), w.end());
    }
  }
  for (std::size_t n = 0; n < rollouts; ++n) {
    const std::size_t delta = gamma == 0.0 ? 0 : horizon(rng);
    std::size_t cur = s;
    for (std::size_t t = 0; t < delta; ++t) {
      const std::size_t action = t == 0 ? a : act[cur](rng);
      cur = support[cur][action][next[cur][action](rng)];
    }
    hist[static_cast<Eigen::Index>(cur)] += 1.0;
  }
  return hist / static_cast<double>(rollouts);
}

}  // namespace tec::testing
