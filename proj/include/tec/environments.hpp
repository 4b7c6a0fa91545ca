#pragma once

// Desk-scale environments: explicit tabular MDPs (generic, sticky-branch bandit, sticky tree),
// a gridworld with a noisy-TV region and a continuous point maze with segment walls.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tec/error.hpp"
#include "tec/nn.hpp"

namespace tec {

// ---------------------------------------------------------------------------
// Tabular MDPs

struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  /// P[s][a] is a probability vector over next states.
  std::vector<std::vector<Vector>> P;
  Vector initial;
  std::size_t horizon = 1;
  double gamma = 0.99;

  [[nodiscard]] const Vector& row(std::size_t s, std::size_t a) const { return P[s][a]; }

  void validate() const {
    detail::require(n_states > 0 && n_actions > 0, "TabularMDP needs positive state and action counts");
    detail::require(horizon >= 1, "TabularMDP horizon must be >= 1");
    detail::require(P.size() == n_states, "TabularMDP transition tensor has wrong state count");
    detail::require(static_cast<std::size_t>(initial.size()) == n_states, "TabularMDP initial distribution size");
    detail::require(std::abs(initial.sum() - 1.0) <= 1e-12 && initial.minCoeff() >= 0.0,
                    "TabularMDP initial distribution must be a probability vector");
    for (std::size_t s = 0; s < n_states; ++s) {
      detail::require(P[s].size() == n_actions, "TabularMDP transition tensor has wrong action count");
      for (std::size_t a = 0; a < n_actions; ++a) {
        detail::require(static_cast<std::size_t>(P[s][a].size()) == n_states, "TabularMDP row has wrong size");
        detail::require(P[s][a].minCoeff() >= 0.0, "TabularMDP row has negative entries");
        detail::require(std::abs(P[s][a].sum() - 1.0) <= 1e-12,
                        "TabularMDP row P[" + std::to_string(s) + "][" + std::to_string(a) + "] does not sum to 1");
      }
    }
  }

  /// Samples a next state.
  std::size_t sample_next(std::size_t s, std::size_t a, Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    const Vector& p = P[s][a];
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return static_cast<std::size_t>(i);
    }
    for (Eigen::Index i = p.size(); i-- > 0;) {
      if (p[i] > 0.0) return static_cast<std::size_t>(i);
    }
    return s;
  }

  std::size_t sample_initial(Rng& rng) const {
    std::discrete_distribution<std::size_t> d(initial.data(), initial.data() + initial.size());
    return d(rng);
  }
};

inline TabularMDP make_tabular(std::size_t n_states, std::size_t n_actions) {
  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.P.assign(n_states, std::vector<Vector>(n_actions, Vector::Zero(static_cast<Eigen::Index>(n_states))));
  m.initial = Vector::Zero(static_cast<Eigen::Index>(n_states));
  m.initial[0] = 1.0;
  return m;
}

inline nlohmann::json to_json(const TabularMDP& m) {
  nlohmann::json j;
  j["n_states"] = m.n_states;
  j["n_actions"] = m.n_actions;
  nlohmann::json p = nlohmann::json::array();
  for (std::size_t s = 0; s < m.n_states; ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      per_action.push_back(std::vector<double>(m.P[s][a].data(), m.P[s][a].data() + m.P[s][a].size()));
    }
    p.push_back(per_action);
  }
  j["P"] = p;
  j["s0"] = std::vector<double>(m.initial.data(), m.initial.data() + m.initial.size());
  j["horizon"] = m.horizon;
  j["gamma"] = m.gamma;
  return j;
}

inline TabularMDP tabular_from_json(const nlohmann::json& j) {
  try {
    TabularMDP m = make_tabular(j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>());
    const auto& p = j.at("P");
    detail::require(p.size() == m.n_states, "P must have n_states entries");
    for (std::size_t s = 0; s < m.n_states; ++s) {
      detail::require(p[s].size() == m.n_actions, "P[s] must have n_actions entries");
      for (std::size_t a = 0; a < m.n_actions; ++a) {
        const auto row = p[s][a].get<std::vector<double>>();
        detail::require(row.size() == m.n_states, "P[s][a] must have n_states entries");
        m.P[s][a] = Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(row.size()));
      }
    }
    const auto s0 = j.at("s0").get<std::vector<double>>();
    detail::require(s0.size() == m.n_states, "s0 must have n_states entries");
    m.initial = Eigen::Map<const Vector>(s0.data(), static_cast<Eigen::Index>(s0.size()));
    m.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("gamma")) m.gamma = j.at("gamma").get<double>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("TabularMDP json: ") + e.what());
  }
}

/// Two-armed sticky-branch MDP. States: 0 root, 1 left-1, 2 left leaf, 3 right-1, 4 right leaf.
/// Actions: 0 left, 1 right (only the root distinguishes them).
inline TabularMDP build_bandit_mdp() {
  TabularMDP m = make_tabular(5, 2);
  m.P[0][0][1] = 1.0;
  m.P[0][1][3] = 1.0;
  for (std::size_t a = 0; a < 2; ++a) {
    m.P[1][a][2] = 1.0;
    m.P[2][a][2] = 1.0;
    m.P[3][a][3] = 0.9;
    m.P[3][a][4] = 0.1;
    m.P[4][a][4] = 1.0;
  }
  m.horizon = 30;
  m.gamma = 0.99;
  m.validate();
  return m;
}

inline constexpr std::size_t kTreeLeft = 0;
inline constexpr std::size_t kTreeRight = 1;
inline constexpr std::size_t kTreeStay = 2;

[[nodiscard]] inline std::size_t tree_node_depth(std::size_t node) {
  std::size_t d = 0;
  for (std::size_t n = node + 1; n > 1; n >>= 1) ++d;
  return d;
}

/// Binary tree of the given depth with BFS-indexed nodes (0 = root, children 2i+1, 2i+2).
/// Actions {left child, right child, stay}. The executed action is the intended one with
/// probability 0.9 and uniform over all three with probability 0.1; a child move executed at
/// a depth-1 node then succeeds with probability 0.1 and otherwise stays. Leaves stay put.
inline TabularMDP build_tree_mdp(std::size_t depth = 2) {
  if (depth < 2) throw ConfigError("tree MDP depth must be >= 2");
  const std::size_t n = (std::size_t{1} << (depth + 1)) - 1;
  TabularMDP m = make_tabular(n, 3);
  auto executed = [&](std::size_t s, std::size_t a) {
    Vector row = Vector::Zero(static_cast<Eigen::Index>(n));
    const std::size_t child = 2 * s + 1 + (a == kTreeRight ? 1 : 0);
    if (a == kTreeStay || child >= n) {
      row[static_cast<Eigen::Index>(s)] = 1.0;
    } else if (tree_node_depth(s) == 1) {
      row[static_cast<Eigen::Index>(child)] = 0.1;
      row[static_cast<Eigen::Index>(s)] = 0.9;
    } else {
      row[static_cast<Eigen::Index>(child)] = 1.0;
    }
    return row;
  };
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < 3; ++a) {
      Vector row = 0.9 * executed(s, a);
      for (std::size_t b = 0; b < 3; ++b) row += (0.1 / 3.0) * executed(s, b);
      m.P[s][a] = row;
    }
  }
  m.horizon = 10;
  m.gamma = 0.9;
  m.validate();
  return m;
}

/// Random MDP whose rows put Dirichlet(1) mass on `branching` distinct random states.
inline TabularMDP build_random_mdp(std::size_t n_states, std::size_t n_actions, std::size_t branching, Rng& rng) {
  detail::require(branching >= 1 && branching <= n_states, "random MDP branching must be in [1, n_states]");
  TabularMDP m = make_tabular(n_states, n_actions);
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<std::size_t> idx(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      for (std::size_t i = 0; i < n_states; ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      Vector row = Vector::Zero(static_cast<Eigen::Index>(n_states));
      for (std::size_t b = 0; b < branching; ++b) row[static_cast<Eigen::Index>(idx[b])] = g(rng) + 1e-3;
      m.P[s][a] = row / row.sum();
    }
  }
  m.initial = Vector::Constant(static_cast<Eigen::Index>(n_states), 1.0 / static_cast<double>(n_states));
  m.horizon = 100;
  m.gamma = 0.9;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Gridworld with a noisy-TV region

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class GridAction : std::size_t { up = 0, down = 1, left = 2, right = 3 };

struct GridworldConfig {
  int width = 32;
  int height = 32;
  std::vector<bool> walls;
  std::vector<bool> noisy;
  std::size_t noise_channels = 4;
  std::size_t noise_alphabet = 8;
  Cell start{16, 16};
  std::size_t horizon = 100;

  [[nodiscard]] std::size_t cell_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  [[nodiscard]] std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.x); }
  [[nodiscard]] Cell cell(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(width)), static_cast<int>(i / static_cast<std::size_t>(width))};
  }
  [[nodiscard]] bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  [[nodiscard]] bool is_wall(Cell c) const { return !inside(c) || walls[index(c)]; }
  [[nodiscard]] bool is_noisy(Cell c) const { return inside(c) && noisy[index(c)]; }
  [[nodiscard]] std::size_t observation_dim() const { return cell_count() + noise_channels; }

  void validate() const {
    detail::require(width > 0 && height > 0, "gridworld dims must be positive");
    detail::require(walls.size() == cell_count() && noisy.size() == cell_count(), "gridworld masks have wrong size");
    detail::require(inside(start) && !walls[index(start)], "gridworld start must be a free cell");
    detail::require(noise_alphabet >= 1, "noise alphabet must be non-empty");
    detail::require(horizon >= 1, "gridworld horizon must be >= 1");
  }
};

/// Desk-scale layout: a 32x32 room split by two walls with doorways and a 6x6 noisy-TV
/// block next to the start. `noise_channels = 0` gives the noiseless variant.
inline GridworldConfig default_gridworld(std::size_t noise_channels = 4, int size = 32) {
  GridworldConfig c;
  c.width = size;
  c.height = size;
  c.walls.assign(c.cell_count(), false);
  c.noisy.assign(c.cell_count(), false);
  c.noise_channels = noise_channels;
  const int mid = size / 2;
  const int door_a = size / 4;
  const int door_b = 3 * size / 4;
  for (int y = 0; y < size; ++y) {
    if (y != door_a && y != door_b) c.walls[c.index({mid + size / 8, y})] = true;
  }
  for (int x = 0; x < mid + size / 8; ++x) {
    if (x != door_a) c.walls[c.index({x, mid + size / 8})] = true;
  }
  c.start = {mid - 2, mid - 2};
  for (int y = mid - 8; y < mid - 2; ++y) {
    for (int x = mid - 8; x < mid - 2; ++x) {
      if (c.inside({x, y}) && !c.walls[c.index({x, y})]) c.noisy[c.index({x, y})] = true;
    }
  }
  c.horizon = 100;
  c.validate();
  return c;
}

/// One-hot cell followed by the noise channels; channels hold (k + 1) / alphabet for an iid
/// uniform symbol k inside the noisy region and 0 elsewhere.
inline SparseVector gridworld_observation(const GridworldConfig& config, Cell cell, Rng& noise_rng) {
  SparseVector obs(static_cast<Eigen::Index>(config.observation_dim()));
  obs.insert(static_cast<Eigen::Index>(config.index(cell))) = 1.0;
  if (config.is_noisy(cell)) {
    std::uniform_int_distribution<std::size_t> symbol(0, config.noise_alphabet - 1);
    for (std::size_t c = 0; c < config.noise_channels; ++c) {
      const double v = static_cast<double>(symbol(noise_rng) + 1) / static_cast<double>(config.noise_alphabet);
      obs.insert(static_cast<Eigen::Index>(config.cell_count() + c)) = v;
    }
  }
  return obs;
}

inline Cell gridworld_move(const GridworldConfig& config, Cell cell, GridAction action) {
  Cell next = cell;
  switch (action) {
    case GridAction::up: next.y -= 1; break;
    case GridAction::down: next.y += 1; break;
    case GridAction::left: next.x -= 1; break;
    case GridAction::right: next.x += 1; break;
  }
  return config.is_wall(next) ? cell : next;
}

inline std::pair<Cell, SparseVector> gridworld_step(const GridworldConfig& config, Cell cell, Rng& noise_rng,
                                                    GridAction action) {
  const Cell next = gridworld_move(config, cell, action);
  return {next, gridworld_observation(config, next, noise_rng)};
}

/// Free cells reachable from the start (flood fill).
inline std::vector<bool> gridworld_reachable(const GridworldConfig& config) {
  std::vector<bool> seen(config.cell_count(), false);
  std::queue<Cell> frontier;
  frontier.push(config.start);
  seen[config.index(config.start)] = true;
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    for (std::size_t a = 0; a < 4; ++a) {
      const Cell n = gridworld_move(config, c, static_cast<GridAction>(a));
      if (!seen[config.index(n)]) {
        seen[config.index(n)] = true;
        frontier.push(n);
      }
    }
  }
  return seen;
}

/// Deterministic tabular view of the gridworld (noise channels dropped).
inline TabularMDP gridworld_to_tabular(const GridworldConfig& config, double gamma = 0.99) {
  TabularMDP m = make_tabular(config.cell_count(), 4);
  for (std::size_t s = 0; s < config.cell_count(); ++s) {
    const Cell c = config.cell(s);
    for (std::size_t a = 0; a < 4; ++a) {
      const Cell n = config.walls[s] ? c : gridworld_move(config, c, static_cast<GridAction>(a));
      m.P[s][a][static_cast<Eigen::Index>(config.index(n))] = 1.0;
    }
  }
  m.initial.setZero();
  m.initial[static_cast<Eigen::Index>(config.index(config.start))] = 1.0;
  m.horizon = config.horizon;
  m.gamma = gamma;
  return m;
}

// ---------------------------------------------------------------------------
// Continuous point maze

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Segment {
  Point a;
  Point b;
};

struct PointMazeConfig {
  std::vector<Segment> walls;
  double dt = 0.1;
  double action_bound = 1.0;
  Point start{0.5, 0.5};
  double x_min = 0.0;
  double x_max = 4.0;
  double y_min = 0.0;
  double y_max = 4.0;
  std::size_t horizon = 100;
  double coverage_cell = 0.25;

  void validate() const {
    detail::require(dt > 0.0 && action_bound > 0.0, "point maze dt and action bound must be positive");
    detail::require(x_min < x_max && y_min < y_max, "point maze arena is empty");
    detail::require(start.x > x_min && start.x < x_max && start.y > y_min && start.y < y_max,
                    "point maze start must lie inside the arena");
    for (const auto& w : walls) {
      const double dx = w.b.x - w.a.x;
      const double dy = w.b.y - w.a.y;
      const double len2 = dx * dx + dy * dy;
      const double t = len2 > 0.0 ? std::clamp(((start.x - w.a.x) * dx + (start.y - w.a.y) * dy) / len2, 0.0, 1.0) : 0.0;
      const double px = w.a.x + t * dx - start.x;
      const double py = w.a.y + t * dy - start.y;
      detail::require(px * px + py * py > 1e-18, "point maze start lies on a wall");
    }
  }
};

/// U-shaped desk maze in a 4x4 arena.
inline PointMazeConfig default_point_maze() {
  PointMazeConfig c;
  c.walls = {Segment{{1.0, 0.0}, {1.0, 3.0}}, Segment{{2.0, 4.0}, {2.0, 1.0}}, Segment{{3.0, 0.0}, {3.0, 3.0}}};
  c.validate();
  return c;
}

namespace detail {

// Parameter t in [0, 1] along p -> q at which it crosses segment w, if any.
inline std::optional<double> segment_hit(Point p, Point q, const Segment& w) {
  const double rx = q.x - p.x;
  const double ry = q.y - p.y;
  const double sx = w.b.x - w.a.x;
  const double sy = w.b.y - w.a.y;
  const double denom = rx * sy - ry * sx;
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double qpx = w.a.x - p.x;
  const double qpy = w.a.y - p.y;
  const double t = (qpx * sy - qpy * sx) / denom;
  const double u = (qpx * ry - qpy * rx) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

}  // namespace detail

/// position + dt * clamp(action); a crossing of a wall or the arena boundary stops the point
/// on the near side, within 1e-10 of the obstacle along the path.
inline Point pointmaze_step(const PointMazeConfig& config, Point position, Vector action) {
  detail::require(action.size() == 2, "point maze action must be 2-dimensional");
  action = action.cwiseMax(-config.action_bound).cwiseMin(config.action_bound);
  const Point target{position.x + config.dt * action[0], position.y + config.dt * action[1]};
  const double len = std::hypot(target.x - position.x, target.y - position.y);
  if (len == 0.0) return position;
  std::vector<Segment> obstacles = config.walls;
  obstacles.push_back({{config.x_min, config.y_min}, {config.x_max, config.y_min}});
  obstacles.push_back({{config.x_max, config.y_min}, {config.x_max, config.y_max}});
  obstacles.push_back({{config.x_max, config.y_max}, {config.x_min, config.y_max}});
  obstacles.push_back({{config.x_min, config.y_max}, {config.x_min, config.y_min}});
  double t_hit = 2.0;
  for (const auto& w : obstacles) {
    if (auto t = detail::segment_hit(position, target, w)) t_hit = std::min(t_hit, *t);
  }
  if (t_hit > 1.0) return target;
  const double t = std::max(0.0, t_hit - 1e-10 / len);
  return {position.x + t * (target.x - position.x), position.y + t * (target.y - position.y)};
}

// ---------------------------------------------------------------------------
// Environment interface used by the training loop

struct Action {
  long index = -1;
  Vector encoding;
};

class Environment {
 public:
  virtual ~Environment() = default;
  [[nodiscard]] virtual std::unique_ptr<Environment> clone() const = 0;
  [[nodiscard]] virtual std::size_t observation_dim() const = 0;
  /// Number of discrete actions; 0 for continuous control.
  [[nodiscard]] virtual std::size_t action_count() const = 0;
  [[nodiscard]] virtual std::size_t action_dim() const = 0;
  [[nodiscard]] virtual std::size_t horizon() const = 0;
  virtual SparseVector reset(Rng& rng) = 0;
  virtual SparseVector step(const Action& action, Rng& rng) = 0;
  /// Tabular id of the current state, or -1.
  [[nodiscard]] virtual long state_id() const = 0;
  /// Discretized key used for coverage counting.
  [[nodiscard]] virtual std::vector<long> coverage_key() const = 0;
  /// Held-out observations for representation statistics.
  [[nodiscard]] virtual std::vector<SparseVector> probe_observations() const = 0;
  /// Number of distinct coverage keys reachable, when known.
  [[nodiscard]] virtual std::size_t reachable_count() const { return 0; }
  /// Tabular model when the environment has one.
  [[nodiscard]] virtual const TabularMDP* tabular() const { return nullptr; }
  /// Observation for a tabular state id, used by oracle rewards and policies.
  [[nodiscard]] virtual SparseVector observation_for(long /*state_id*/) const {
    throw UnsupportedConfiguration("environment has no tabular observations");
  }

  [[nodiscard]] Action discrete_action(std::size_t index) const {
    Action a;
    a.index = static_cast<long>(index);
    a.encoding = Vector::Zero(static_cast<Eigen::Index>(action_count()));
    a.encoding[static_cast<Eigen::Index>(index)] = 1.0;
    return a;
  }
};

class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(TabularMDP mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularEnv>(*this); }
  [[nodiscard]] std::size_t observation_dim() const override { return mdp_.n_states; }
  [[nodiscard]] std::size_t action_count() const override { return mdp_.n_actions; }
  [[nodiscard]] std::size_t action_dim() const override { return mdp_.n_actions; }
  [[nodiscard]] std::size_t horizon() const override { return mdp_.horizon; }
  SparseVector reset(Rng& rng) override {
    state_ = mdp_.sample_initial(rng);
    return one_hot(mdp_.n_states, state_);
  }
  SparseVector step(const Action& action, Rng& rng) override {
    detail::require(action.index >= 0 && static_cast<std::size_t>(action.index) < mdp_.n_actions,
                    "tabular action out of range");
    state_ = mdp_.sample_next(state_, static_cast<std::size_t>(action.index), rng);
    return one_hot(mdp_.n_states, state_);
  }
  [[nodiscard]] long state_id() const override { return static_cast<long>(state_); }
  [[nodiscard]] std::vector<long> coverage_key() const override { return {static_cast<long>(state_)}; }
  [[nodiscard]] std::vector<SparseVector> probe_observations() const override {
    std::vector<SparseVector> out;
    for (std::size_t s = 0; s < mdp_.n_states; ++s) out.push_back(one_hot(mdp_.n_states, s));
    return out;
  }
  [[nodiscard]] std::size_t reachable_count() const override { return mdp_.n_states; }
  [[nodiscard]] const TabularMDP* tabular() const override { return &mdp_; }
  [[nodiscard]] SparseVector observation_for(long id) const override {
    return one_hot(mdp_.n_states, static_cast<std::size_t>(id));
  }

 private:
  TabularMDP mdp_;
  std::size_t state_ = 0;
};

class GridworldEnv final : public Environment {
 public:
  explicit GridworldEnv(GridworldConfig config, std::uint64_t noise_seed = 0x5eed)
      : config_(std::move(config)), noise_rng_(noise_seed), tabular_(gridworld_to_tabular(config_)) {
    config_.validate();
    const auto reach = gridworld_reachable(config_);
    reachable_ = static_cast<std::size_t>(std::count(reach.begin(), reach.end(), true));
    for (std::size_t i = 0; i < reach.size(); ++i) {
      if (reach[i]) reachable_cells_.push_back(i);
    }
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<GridworldEnv>(*this); }
  [[nodiscard]] const GridworldConfig& config() const { return config_; }
  [[nodiscard]] std::size_t observation_dim() const override { return config_.observation_dim(); }
  [[nodiscard]] std::size_t action_count() const override { return 4; }
  [[nodiscard]] std::size_t action_dim() const override { return 4; }
  [[nodiscard]] std::size_t horizon() const override { return config_.horizon; }
  /// Noise draws come from the environment's own stream so that enabling noise leaves the
  /// agent's random stream untouched.
  SparseVector reset(Rng& /*rng*/) override {
    cell_ = config_.start;
    return gridworld_observation(config_, cell_, noise_rng_);
  }
  SparseVector step(const Action& action, Rng& /*rng*/) override {
    detail::require(action.index >= 0 && action.index < 4, "gridworld action out of range");
    auto [next, obs] = gridworld_step(config_, cell_, noise_rng_, static_cast<GridAction>(action.index));
    cell_ = next;
    return obs;
  }
  [[nodiscard]] Cell cell() const { return cell_; }
  [[nodiscard]] long state_id() const override { return static_cast<long>(config_.index(cell_)); }
  [[nodiscard]] std::vector<long> coverage_key() const override { return {state_id()}; }
  [[nodiscard]] std::vector<SparseVector> probe_observations() const override {
    std::vector<SparseVector> out;
    const std::size_t stride = std::max<std::size_t>(1, reachable_cells_.size() / 64);
    for (std::size_t i = 0; i < reachable_cells_.size(); i += stride) {
      out.push_back(one_hot(config_.observation_dim(), reachable_cells_[i]));
    }
    return out;
  }
  [[nodiscard]] std::size_t reachable_count() const override { return reachable_; }
  [[nodiscard]] const TabularMDP* tabular() const override { return &tabular_; }
  [[nodiscard]] SparseVector observation_for(long id) const override {
    return one_hot(config_.observation_dim(), static_cast<std::size_t>(id));
  }

 private:
  GridworldConfig config_;
  Rng noise_rng_;
  TabularMDP tabular_;
  Cell cell_{};
  std::size_t reachable_ = 0;
  std::vector<std::size_t> reachable_cells_;
};

class PointMazeEnv final : public Environment {
 public:
  explicit PointMazeEnv(PointMazeConfig config) : config_(std::move(config)) { config_.validate(); }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMazeEnv>(*this); }
  [[nodiscard]] std::size_t observation_dim() const override { return 2; }
  [[nodiscard]] std::size_t action_count() const override { return 0; }
  [[nodiscard]] std::size_t action_dim() const override { return 2; }
  [[nodiscard]] std::size_t horizon() const override { return config_.horizon; }
  SparseVector reset(Rng& /*rng*/) override {
    position_ = config_.start;
    return observation();
  }
  SparseVector step(const Action& action, Rng& /*rng*/) override {
    position_ = pointmaze_step(config_, position_, action.encoding);
    return observation();
  }
  [[nodiscard]] long state_id() const override { return -1; }
  [[nodiscard]] std::vector<long> coverage_key() const override {
    return {static_cast<long>(std::floor(position_.x / config_.coverage_cell)),
            static_cast<long>(std::floor(position_.y / config_.coverage_cell))};
  }
  [[nodiscard]] std::vector<SparseVector> probe_observations() const override {
    std::vector<SparseVector> out;
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        Vector p(2);
        p << config_.x_min + (i + 0.5) * (config_.x_max - config_.x_min) / 8.0,
            config_.y_min + (j + 0.5) * (config_.y_max - config_.y_min) / 8.0;
        out.push_back(to_sparse(p));
      }
    }
    return out;
  }
  [[nodiscard]] Point position() const { return position_; }

 private:
  [[nodiscard]] SparseVector observation() const {
    Vector p(2);
    p << position_.x, position_.y;
    SparseVector s(2);
    s.insert(0) = p[0];
    s.insert(1) = p[1];
    return s;
  }

  PointMazeConfig config_;
  Point position_{};
};

}  // namespace tec
