// tec: run, sweep and plot exploration experiments.
//
//   tec run <config.json> [--seeds 0,1,2] [--out DIR]
//   tec sweep <config.json> --axis FIELD --values a,b,c [--seeds ...] [--out DIR]
//   tec plot <glob> --metric coverage --out fig.svg [--x iter]
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tec/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : tec::detail::split(text, ',')) {
    if (part.empty()) throw tec::ConfigError("--seeds: empty entry in '" + text + "'");
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != part.size() || part.front() == '-') throw tec::ConfigError("--seeds: '" + part + "' is not a non-negative integer");
    seeds.push_back(v);
  }
  return seeds;
}

void print_manifest(const tec::RunManifest& m) {
  std::cout << m.name << " [" << m.config_hash << "] -> " << m.output_dir << " (" << tec::format_double(m.wall_clock_seconds)
            << " s, " << m.threads << " thread" << (m.threads == 1 ? "" : "s") << ")\n";
  for (const auto& s : m.seeds) {
    std::cout << "  seed " << s.seed << ": coverage " << s.final_coverage;
    if (s.reachable > 0) std::cout << "/" << s.reachable;
    std::cout << ", " << s.metrics_csv << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive temporal-coherence exploration experiments"};
  app.require_subcommand(1);

  std::string config_path, seeds_text, out_dir;
  auto* run_cmd = app.add_subcommand("run", "Train every seed of a config");
  run_cmd->add_option("config", config_path, "Experiment config (JSON)")->required();
  run_cmd->add_option("--seeds", seeds_text, "Comma-separated seeds, overriding the config");
  run_cmd->add_option("--out", out_dir, "Output directory, overriding the config");

  std::string sweep_config, axis, values_text, sweep_seeds, sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "One run per value of a config field");
  sweep_cmd->add_option("config", sweep_config, "Base experiment config (JSON)")->required();
  sweep_cmd->add_option("--axis", axis, "Field to vary, dotted path or unique leaf name")->required();
  sweep_cmd->add_option("--values", values_text, "Comma-separated values")->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "Comma-separated seeds, overriding the config");
  sweep_cmd->add_option("--out", sweep_out, "Output directory, overriding the config");

  std::string pattern, metric = "coverage", plot_out = "fig.svg", x_column = "iter";
  auto* plot_cmd = app.add_subcommand("plot", "Plot mean +- std of a metric over matching CSVs");
  plot_cmd->add_option("glob", pattern, "Glob of metrics CSVs, e.g. 'runs/seed_*/metrics.csv'")->required();
  plot_cmd->add_option("--metric", metric, "Column to plot");
  plot_cmd->add_option("--out", plot_out, "Output SVG path");
  plot_cmd->add_option("--x", x_column, "Column for the x axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      tec::ExperimentConfig config = tec::load_experiment(config_path);
      if (!seeds_text.empty()) config.seeds = parse_seed_list(seeds_text);
      if (!out_dir.empty()) config.output_dir = out_dir;
      print_manifest(tec::run(config));
    } else if (*sweep_cmd) {
      tec::ExperimentConfig config = tec::load_experiment(sweep_config);
      if (!sweep_seeds.empty()) config.seeds = parse_seed_list(sweep_seeds);
      if (!sweep_out.empty()) config.output_dir = sweep_out;
      const auto result = tec::sweep(config, axis, tec::detail::split(values_text, ','));
      for (const auto& m : result.manifests) print_manifest(m);
      std::cout << "summary: " << result.summary_csv << '\n';
    } else if (*plot_cmd) {
      const auto result = tec::plot(pattern, metric, plot_out, x_column);
      std::cout << "plotted " << result.inputs.size() << " file(s) -> " << result.svg_path << " (" << result.csv_path << ")\n";
    }
  } catch (const tec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
