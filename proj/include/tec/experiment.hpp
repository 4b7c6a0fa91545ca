#pragma once

// Experiment orchestration: JSON configs, seeded runs, sweeps over one config field and
// SVG plots of seed-aggregated metric curves.

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tec/agents.hpp"
#include "tec/environments.hpp"
#include "tec/error.hpp"
#include "tec/format.hpp"

namespace tec {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Field-checked JSON reading

namespace detail {

class FieldReader {
 public:
  FieldReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }

  void read(const char* key, double& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(key, "must be finite");
    }
  }
  void read(const char* key, std::size_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        fail(key, "expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void read(const char* key, bool& out) {
    if (const Json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const Json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<std::size_t>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0)) {
          fail(key, "expected an array of non-negative integers");
        }
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  /// Enum fields go through their string parser; its message is prefixed with the path.
  template <class E, class Parse>
  void read_enum(const char* key, E& out, Parse parse) {
    std::string s;
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    read(key, s);
    try {
      out = parse(s);
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }

  [[nodiscard]] FieldReader child(const char* key) {
    static const Json empty = Json::object();
    const Json* v = take(key);
    return FieldReader(v ? *v : empty, where(key));
  }

  [[nodiscard]] const Json* raw(const char* key) { return take(key); }

  /// Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw ConfigError(where(key) + ": " + message);
  }

  [[nodiscard]] std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline RewardEstimator parse_estimator(const std::string& s) {
  if (s == "single_sample") return RewardEstimator::single_sample;
  if (s == "suffix_mc") return RewardEstimator::suffix_mc;
  throw ConfigError("unknown estimator '" + s + "' (expected single_sample or suffix_mc)");
}

inline std::string to_string(RewardEstimator e) {
  return e == RewardEstimator::single_sample ? "single_sample" : "suffix_mc";
}

inline OffsetStrategy parse_strategy(const std::string& s) {
  if (s == "geometric") return OffsetStrategy::geometric;
  if (s == "uniform") return OffsetStrategy::uniform;
  if (s == "gamma_schedule") return OffsetStrategy::gamma_schedule;
  throw ConfigError("unknown sampler strategy '" + s + "' (expected geometric, uniform or gamma_schedule)");
}

inline std::string to_string(OffsetStrategy s) {
  switch (s) {
    case OffsetStrategy::geometric: return "geometric";
    case OffsetStrategy::uniform: return "uniform";
    case OffsetStrategy::gamma_schedule: return "gamma_schedule";
  }
  return "?";
}

inline PolicyChoice parse_policy_choice(const std::string& s) {
  if (s == "auto") return PolicyChoice::automatic;
  if (s == "tabular") return PolicyChoice::tabular;
  if (s == "mlp") return PolicyChoice::mlp;
  throw ConfigError("unknown policy '" + s + "' (expected auto, tabular or mlp)");
}

inline std::string to_string(PolicyChoice p) {
  switch (p) {
    case PolicyChoice::automatic: return "auto";
    case PolicyChoice::tabular: return "tabular";
    case PolicyChoice::mlp: return "mlp";
  }
  return "?";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config types

/// Environment by name plus its parameters:
///   bandit {}, tree {depth}, random_mdp {n_states, n_actions, branching, mdp_seed},
///   tabular {mdp}, gridworld {size, noise_channels, noise_alphabet, horizon, noise_seed},
///   point_maze {horizon, dt, coverage_cell}.
struct EnvironmentSpec {
  std::string kind = "gridworld";
  Json params = Json::object();
};

struct ExperimentConfig {
  std::string name = "experiment";
  EnvironmentSpec environment;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";
};

inline Json to_json(const TrainConfig& c) {
  Json j;
  j["total_episodes"] = c.total_episodes;
  j["episodes_per_iteration"] = c.episodes_per_iteration;
  j["gamma_rl"] = c.gamma_rl;
  j["policy_lr"] = c.policy_lr;
  j["value_lr"] = c.value_lr;
  j["critic_lr"] = c.critic_lr;
  j["entropy_coef"] = c.entropy_coef;
  j["clip_epsilon"] = c.clip_epsilon;
  j["use_ppo"] = c.use_ppo;
  j["policy_epochs"] = c.policy_epochs;
  j["contrastive_updates"] = c.contrastive_updates;
  j["batch_size"] = c.batch_size;
  j["repetition_factor"] = c.repetition_factor;
  j["buffer_capacity"] = c.buffer_capacity;
  j["normalize_advantages"] = c.normalize_advantages;
  j["reward_normalization"] = c.reward_normalization;
  j["learn_temperature"] = c.learn_temperature;
  j["monolithic"] = c.monolithic;
  j["policy"] = detail::to_string(c.policy);
  j["policy_hidden"] = c.policy_hidden;
  j["critic_hidden"] = c.critic_hidden;
  j["rep_dim"] = c.rep_dim;
  j["critic_kind"] = to_string(c.critic);
  j["normalize_reps"] = c.normalize_reps;
  j["dot_sign"] = c.dot_sign;
  j["icm_forward_weight"] = c.icm_forward_weight;
  j["etd_self_baseline"] = c.etd_self_baseline;
  j["visitation_window"] = c.visitation_window;
  j["coverage_cell"] = c.coverage_cell;
  j["reward"] = {{"source", to_string(c.reward.source)},
                 {"estimator", detail::to_string(c.reward.estimator)},
                 {"mc_normalize", c.reward.mc_normalize},
                 {"beta", c.reward.beta},
                 {"fast_path", c.reward.fast_path},
                 {"count_score_first", c.reward.count_score_first}};
  j["sampler"] = {{"gamma_cl", c.sampler.gamma_cl},
                  {"strategy", detail::to_string(c.sampler.strategy)},
                  {"schedule_start", c.sampler.schedule_start},
                  {"schedule_end", c.sampler.schedule_end},
                  {"include_zero_offset", c.sampler.include_zero_offset}};
  j["loss"] = {{"loss_kind", to_string(c.loss.loss_kind)}, {"logsumexp_coef", c.loss.logsumexp_coef}};
  return j;
}

inline TrainConfig train_config_from_json(const Json& j, const std::string& path = "train") {
  TrainConfig c;
  detail::FieldReader r(j, path);
  r.read("total_episodes", c.total_episodes);
  r.read("episodes_per_iteration", c.episodes_per_iteration);
  r.read("gamma_rl", c.gamma_rl);
  r.read("policy_lr", c.policy_lr);
  r.read("value_lr", c.value_lr);
  r.read("critic_lr", c.critic_lr);
  r.read("entropy_coef", c.entropy_coef);
  r.read("clip_epsilon", c.clip_epsilon);
  r.read("use_ppo", c.use_ppo);
  r.read("policy_epochs", c.policy_epochs);
  r.read("contrastive_updates", c.contrastive_updates);
  r.read("batch_size", c.batch_size);
  r.read("repetition_factor", c.repetition_factor);
  r.read("buffer_capacity", c.buffer_capacity);
  r.read("normalize_advantages", c.normalize_advantages);
  r.read("reward_normalization", c.reward_normalization);
  r.read("learn_temperature", c.learn_temperature);
  r.read("monolithic", c.monolithic);
  r.read_enum("policy", c.policy, detail::parse_policy_choice);
  r.read("policy_hidden", c.policy_hidden);
  r.read("critic_hidden", c.critic_hidden);
  r.read("rep_dim", c.rep_dim);
  r.read_enum("critic_kind", c.critic, parse_critic_kind);
  r.read("normalize_reps", c.normalize_reps);
  r.read("dot_sign", c.dot_sign);
  r.read("icm_forward_weight", c.icm_forward_weight);
  r.read("etd_self_baseline", c.etd_self_baseline);
  r.read("visitation_window", c.visitation_window);
  r.read("coverage_cell", c.coverage_cell);
  {
    auto rr = r.child("reward");
    rr.read_enum("source", c.reward.source, parse_reward_source);
    rr.read_enum("estimator", c.reward.estimator, detail::parse_estimator);
    rr.read("mc_normalize", c.reward.mc_normalize);
    rr.read("beta", c.reward.beta);
    rr.read("fast_path", c.reward.fast_path);
    rr.read("count_score_first", c.reward.count_score_first);
    rr.finish();
  }
  {
    auto rs = r.child("sampler");
    rs.read("gamma_cl", c.sampler.gamma_cl);
    rs.read_enum("strategy", c.sampler.strategy, detail::parse_strategy);
    rs.read("schedule_start", c.sampler.schedule_start);
    rs.read("schedule_end", c.sampler.schedule_end);
    rs.read("include_zero_offset", c.sampler.include_zero_offset);
    rs.finish();
  }
  {
    auto rl = r.child("loss");
    rl.read_enum("loss_kind", c.loss.loss_kind, parse_loss_kind);
    rl.read("logsumexp_coef", c.loss.logsumexp_coef);
    rl.finish();
  }
  r.finish();
  try {
    c.validate();
    c.reward.validate(true);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

/// Fills in every parameter of the named environment with its default.
inline EnvironmentSpec normalized_environment(const Json& j, const std::string& path = "environment") {
  EnvironmentSpec spec;
  detail::FieldReader r(j, path);
  r.read("kind", spec.kind);
  auto p = r.child("params");
  Json out = Json::object();
  if (spec.kind == "bandit") {
  } else if (spec.kind == "tree") {
    std::size_t depth = 2;
    p.read("depth", depth);
    if (depth < 2) p.fail("depth", "must be >= 2");
    out["depth"] = depth;
  } else if (spec.kind == "random_mdp") {
    std::size_t n = 10, a = 3, branching = 3, mdp_seed = 0;
    p.read("n_states", n);
    p.read("n_actions", a);
    p.read("branching", branching);
    p.read("mdp_seed", mdp_seed);
    if (n < 1 || a < 1) p.fail("n_states", "n_states and n_actions must be positive");
    if (branching < 1 || branching > n) p.fail("branching", "must lie in [1, n_states]");
    out = {{"n_states", n}, {"n_actions", a}, {"branching", branching}, {"mdp_seed", mdp_seed}};
  } else if (spec.kind == "tabular") {
    const Json* mdp = p.raw("mdp");
    if (mdp == nullptr) p.fail("mdp", "required for a tabular environment");
    try {
      out["mdp"] = to_json(tabular_from_json(*mdp));
    } catch (const std::exception& e) {
      p.fail("mdp", e.what());
    }
  } else if (spec.kind == "gridworld") {
    std::size_t size = 32, channels = 4, alphabet = 8, horizon = 100, noise_seed = 0x5eed;
    p.read("size", size);
    p.read("noise_channels", channels);
    p.read("noise_alphabet", alphabet);
    p.read("horizon", horizon);
    p.read("noise_seed", noise_seed);
    if (size < 16) p.fail("size", "must be >= 16");
    if (alphabet < 1) p.fail("noise_alphabet", "must be positive");
    if (horizon < 1) p.fail("horizon", "must be positive");
    out = {{"size", size}, {"noise_channels", channels}, {"noise_alphabet", alphabet}, {"horizon", horizon},
           {"noise_seed", noise_seed}};
  } else if (spec.kind == "point_maze") {
    PointMazeConfig d = default_point_maze();
    std::size_t horizon = d.horizon;
    double dt = d.dt, cell = d.coverage_cell;
    p.read("horizon", horizon);
    p.read("dt", dt);
    p.read("coverage_cell", cell);
    if (dt <= 0.0) p.fail("dt", "must be positive");
    if (cell <= 0.0) p.fail("coverage_cell", "must be positive");
    out = {{"horizon", horizon}, {"dt", dt}, {"coverage_cell", cell}};
  } else {
    r.fail("kind", "unknown environment '" + spec.kind + "' (expected bandit, tree, random_mdp, tabular, gridworld or point_maze)");
  }
  p.finish();
  r.finish();
  spec.params = std::move(out);
  return spec;
}

/// The gridworld noise stream is offset by the seed so that seeds see different noise.
inline std::unique_ptr<Environment> make_environment(const EnvironmentSpec& raw, std::uint64_t seed = 0) {
  const EnvironmentSpec spec = normalized_environment(Json{{"kind", raw.kind}, {"params", raw.params}});
  const Json& p = spec.params;
  if (spec.kind == "bandit") return std::make_unique<TabularEnv>(build_bandit_mdp());
  if (spec.kind == "tree") return std::make_unique<TabularEnv>(build_tree_mdp(p["depth"].get<std::size_t>()));
  if (spec.kind == "random_mdp") {
    Rng rng(p["mdp_seed"].get<std::uint64_t>());
    return std::make_unique<TabularEnv>(build_random_mdp(p["n_states"].get<std::size_t>(), p["n_actions"].get<std::size_t>(),
                                                         p["branching"].get<std::size_t>(), rng));
  }
  if (spec.kind == "tabular") return std::make_unique<TabularEnv>(tabular_from_json(p["mdp"]));
  if (spec.kind == "gridworld") {
    GridworldConfig g = default_gridworld(p["noise_channels"].get<std::size_t>(), p["size"].get<int>());
    g.noise_alphabet = p["noise_alphabet"].get<std::size_t>();
    g.horizon = p["horizon"].get<std::size_t>();
    return std::make_unique<GridworldEnv>(std::move(g), p["noise_seed"].get<std::uint64_t>() + seed);
  }
  PointMazeConfig m = default_point_maze();
  m.horizon = p["horizon"].get<std::size_t>();
  m.dt = p["dt"].get<double>();
  m.coverage_cell = p["coverage_cell"].get<double>();
  return std::make_unique<PointMazeEnv>(std::move(m));
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["environment"] = {{"kind", c.environment.kind}, {"params", c.environment.params}};
  j["train"] = to_json(c.train);
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

/// Parses and validates a config; every error names the offending field.
inline ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig c;
  detail::FieldReader r(j, "");
  r.read("name", c.name);
  r.read("output_dir", c.output_dir);
  if (const Json* seeds = r.raw("seeds")) {
    if (!seeds->is_array() || seeds->empty()) r.fail("seeds", "expected a non-empty array of non-negative integers");
    c.seeds.clear();
    for (const auto& s : *seeds) {
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
        r.fail("seeds", "expected a non-empty array of non-negative integers");
      }
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  const Json* env = r.raw("environment");
  c.environment = normalized_environment(env ? *env : Json::object());
  const Json* train = r.raw("train");
  c.train = train_config_from_json(train ? *train : Json::object());
  r.finish();
  const auto probe = make_environment(c.environment);
  const bool tabular = probe->tabular() != nullptr;
  try {
    c.train.reward.validate(tabular);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train.reward.source: ") + e.what());
  }
  if (c.train.reward.fast_path && c.train.critic != CriticKind::L2NoSqrt && c.train.critic != CriticKind::Dot) {
    throw ConfigError("train.reward.fast_path: only available for the l2_no_sqrt and dot critics");
  }
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

/// FNV-1a over the canonical dump (sorted keys, defaults filled in), as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Runs

struct SeedRecord {
  std::uint64_t seed = 0;
  std::string metrics_csv;
  std::string visitation_csv;
  double wall_clock_seconds = 0.0;
  std::size_t final_coverage = 0;
  std::size_t reachable = 0;
  IterationMetrics final_metrics;
};

struct RunManifest {
  std::string name;
  std::string config_hash;
  std::string output_dir;
  std::vector<SeedRecord> seeds;
  double wall_clock_seconds = 0.0;
  std::size_t threads = 1;
};

inline Json to_json(const RunManifest& m) {
  Json j;
  j["name"] = m.name;
  j["config_hash"] = m.config_hash;
  j["output_dir"] = m.output_dir;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  j["threads"] = m.threads;
  j["versions"] = {{"tec", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"compiler", __VERSION__}};
  Json seeds = Json::array();
  for (const auto& s : m.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"metrics_csv", s.metrics_csv},
                     {"visitation_csv", s.visitation_csv},
                     {"wall_clock_seconds", s.wall_clock_seconds},
                     {"final_coverage", s.final_coverage},
                     {"reachable", s.reachable}});
  }
  j["seeds"] = seeds;
  return j;
}

/// Parallel seeds allowed by TEC_THREADS, or the hardware concurrency when unset.
inline std::size_t thread_budget() {
  if (const char* v = std::getenv("TEC_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1) throw ConfigError("TEC_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Trains one seed and writes its CSVs under `dir`.
inline SeedRecord run_seed(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  auto env = make_environment(config.environment, seed);
  TrainConfig tc = config.train;
  tc.seed = seed;
  const TrainingArtifacts art = train(*env, tc);

  const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
  fs::create_directories(seed_dir);
  SeedRecord rec;
  rec.seed = seed;
  rec.metrics_csv = (seed_dir / "metrics.csv").string();
  rec.visitation_csv = (seed_dir / "visitation.csv").string();
  {
    std::ofstream out(rec.metrics_csv);
    if (!out) throw std::runtime_error("cannot write " + rec.metrics_csv);
    write_metrics_csv(out, art.metrics);
  }
  {
    std::ofstream out(rec.visitation_csv);
    if (!out) throw std::runtime_error("cannot write " + rec.visitation_csv);
    out << "key,visits\n";
    for (const auto& [key, n] : art.visitation) {
      for (std::size_t i = 0; i < key.size(); ++i) out << (i ? ":" : "") << key[i];
      out << ',' << n << '\n';
    }
  }
  rec.final_coverage = art.metrics.empty() ? 0 : art.metrics.back().coverage;
  if (!art.metrics.empty()) rec.final_metrics = art.metrics.back();
  rec.reachable = art.reachable;
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Runs every seed, at most `threads` at a time, then writes config.json and manifest.json.
inline RunManifest run(const ExperimentConfig& config, std::size_t threads = 0) {
  namespace fs = std::filesystem;
  if (threads == 0) threads = thread_budget();
  threads = std::min(threads, config.seeds.size());
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);

  RunManifest manifest;
  manifest.name = config.name;
  manifest.config_hash = config_hash(config);
  manifest.output_dir = dir.string();
  manifest.threads = threads;
  manifest.seeds.resize(config.seeds.size());

  std::vector<std::exception_ptr> errors(config.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      try {
        manifest.seeds[i] = run_seed(config, config.seeds[i], dir);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("seed " + std::to_string(config.seeds[i]) + ": " + e.what());
    }
  }
  manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::ofstream out(dir / "config.json");
    out << to_json(config).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "manifest.json");
    out << to_json(manifest).dump(2) << '\n';
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace detail {

inline void collect_leaf_paths(const Json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object() && !it->empty()) {
      collect_leaf_paths(*it, path, out);
    } else {
      out.push_back(path);
    }
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Resolves a sweep axis to a dotted path into the config. A bare name matches the unique
/// leaf of that name, so "critic_kind" means "train.critic_kind".
inline std::string resolve_axis(const ExperimentConfig& config, const std::string& axis) {
  std::vector<std::string> leaves;
  detail::collect_leaf_paths(to_json(config), "", leaves);
  if (std::find(leaves.begin(), leaves.end(), axis) != leaves.end()) return axis;
  std::vector<std::string> hits;
  for (const auto& p : leaves) {
    if (p == axis || (p.size() > axis.size() && p.compare(p.size() - axis.size() - 1, std::string::npos, "." + axis) == 0)) {
      hits.push_back(p);
    }
  }
  if (hits.size() == 1) return hits.front();
  if (hits.empty()) throw ConfigError("sweep axis '" + axis + "' does not name a config field");
  std::string list;
  for (const auto& h : hits) list += (list.empty() ? "" : ", ") + h;
  throw ConfigError("sweep axis '" + axis + "' is ambiguous: " + list);
}

/// A sweep value: JSON when it parses (numbers, booleans, arrays), a string otherwise.
inline Json parse_axis_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return Json(text);
  }
}

inline ExperimentConfig with_field(const ExperimentConfig& base, const std::string& path, const Json& value) {
  Json j = to_json(base);
  Json* node = &j;
  for (const auto& part : detail::split(path, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("config has no field '" + path + "'");
    node = &(*node)[part];
  }
  *node = value;
  return experiment_from_json(j);
}

struct SweepResult {
  std::string axis;
  std::vector<std::string> values;
  std::vector<RunManifest> manifests;
  std::string summary_csv;
};

/// One run per value under <output_dir>/<axis>=<value>, plus summary.csv with one row per
/// (value, seed).
inline SweepResult sweep(const ExperimentConfig& base, const std::string& axis, const std::vector<std::string>& values,
                         std::size_t threads = 0) {
  namespace fs = std::filesystem;
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  SweepResult result;
  result.axis = resolve_axis(base, axis);
  result.values = values;
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    ExperimentConfig c;
    try {
      c = with_field(base, result.axis, parse_axis_value(v));
    } catch (const ConfigError& e) {
      throw ConfigError("sweep value '" + v + "' for " + result.axis + ": " + e.what());
    }
    c.output_dir = (fs::path(base.output_dir) / (result.axis + "=" + v)).string();
    c.name = base.name + "/" + result.axis + "=" + v;
    configs.push_back(std::move(c));
  }
  for (const auto& c : configs) result.manifests.push_back(run(c, threads));

  fs::create_directories(base.output_dir);
  result.summary_csv = (fs::path(base.output_dir) / "summary.csv").string();
  std::ofstream out(result.summary_csv);
  if (!out) throw std::runtime_error("cannot write " + result.summary_csv);
  out << "axis,value,seed,config_hash,iterations,episodes,final_coverage,reachable,contrastive_loss,mean_r_intr,"
         "rep_variance,tau,wall_clock_seconds\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& m = result.manifests[i];
    for (const auto& s : m.seeds) {
      const auto& f = s.final_metrics;
      out << result.axis << ',' << values[i] << ',' << s.seed << ',' << m.config_hash << ',' << f.iter + 1 << ','
          << f.episodes << ',' << s.final_coverage << ',' << s.reachable << ',' << format_double(f.contrastive_loss) << ','
          << format_double(f.mean_r_intr) << ',' << format_double(f.rep_variance) << ',' << format_double(f.tau) << ','
          << format_double(s.wall_clock_seconds) << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Plots

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty CSV");
  t.header = detail::split(line, ',');
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != t.header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " columns");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      row.push_back(end == c.c_str() ? std::nan("") : v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Per-x mean and sample standard deviation (n - 1 denominator; zero for a single curve).
struct AggregateCurve {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::size_t> count;
};

inline AggregateCurve aggregate_curves(const std::vector<CsvTable>& tables, const std::string& metric,
                                       const std::string& x_column = "iter") {
  if (tables.empty()) throw ConfigError("no CSV files to plot");
  const auto& header = tables.front().header;
  for (const auto& t : tables) {
    if (t.header != header) throw ConfigError("CSV schema mismatch between plotted files");
  }
  const auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t xi = col(x_column);
  const std::size_t mi = col(metric);
  std::map<double, std::vector<double>> by_x;
  for (const auto& t : tables) {
    for (const auto& row : t.rows) {
      if (std::isfinite(row[mi])) by_x[row[xi]].push_back(row[mi]);
    }
  }
  AggregateCurve c;
  for (const auto& [x, vals] : by_x) {
    const double n = static_cast<double>(vals.size());
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    c.x.push_back(x);
    c.mean.push_back(mean);
    c.stddev.push_back(vals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
    c.count.push_back(vals.size());
  }
  return c;
}

inline std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw std::runtime_error("glob failed for '" + pattern + "'");
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

/// Line chart of the mean with a shaded mean +- std band.
inline std::string render_svg(const AggregateCurve& c, const std::string& metric, const std::string& x_label,
                              const std::string& title) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  double x0 = c.x.empty() ? 0.0 : c.x.front(), x1 = c.x.empty() ? 1.0 : c.x.back();
  double y0 = 0.0, y1 = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    const double lo = c.mean[i] - c.stddev[i], hi = c.mean[i] + c.stddev[i];
    y0 = first ? lo : std::min(y0, lo);
    y1 = first ? hi : std::max(y1, hi);
    first = false;
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
     << H << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";
  os << "  <line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0;
    const double xv = x0 + (x1 - x0) * k / 4.0;
    os << "  <text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << format_double(std::round(yv * 1000.0) / 1000.0) << "</text>\n";
    os << "  <text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << format_double(std::round(xv * 100.0) / 100.0) << "</text>\n";
  }
  os << "  <text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xml_escape(x_label) << "</text>\n";
  os << "  <text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << xml_escape(metric) << "</text>\n";
  if (!c.x.empty()) {
    os << "  <polygon fill=\"#1f77b4\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i) os << px(c.x[i]) << ',' << py(c.mean[i] + c.stddev[i]) << ' ';
    for (std::size_t i = c.x.size(); i-- > 0;) os << px(c.x[i]) << ',' << py(c.mean[i] - c.stddev[i]) << ' ';
    os << "\"/>\n";
    os << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i) os << px(c.x[i]) << ',' << py(c.mean[i]) << ' ';
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct PlotResult {
  std::vector<std::string> inputs;
  AggregateCurve curve;
  std::string svg_path;
  std::string csv_path;
};

/// Aggregates every metrics CSV matching `pattern`; writes the SVG and a companion CSV
/// (x, mean, std, n) next to it.
inline PlotResult plot(const std::string& pattern, const std::string& metric, const std::filesystem::path& out,
                       const std::string& x_column = "iter") {
  PlotResult res;
  res.inputs = expand_glob(pattern);
  if (res.inputs.empty()) throw ConfigError("no files match '" + pattern + "'");
  std::vector<CsvTable> tables;
  for (const auto& f : res.inputs) tables.push_back(read_numeric_csv(f));
  res.curve = aggregate_curves(tables, metric, x_column);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  res.svg_path = out.string();
  {
    std::ofstream svg(out);
    if (!svg) throw std::runtime_error("cannot write " + out.string());
    svg << render_svg(res.curve, metric, x_column,
                      metric + " (mean +- std over " + std::to_string(res.inputs.size()) + " runs)");
  }
  std::filesystem::path csv = out;
  csv.replace_extension(".csv");
  res.csv_path = csv.string();
  std::ofstream c(csv);
  if (!c) throw std::runtime_error("cannot write " + csv.string());
  c << x_column << ",mean,std,n\n";
  for (std::size_t i = 0; i < res.curve.x.size(); ++i) {
    c << format_double(res.curve.x[i]) << ',' << format_double(res.curve.mean[i]) << ','
      << format_double(res.curve.stddev[i]) << ',' << res.curve.count[i] << '\n';
  }
  return res;
}

}  // namespace tec
