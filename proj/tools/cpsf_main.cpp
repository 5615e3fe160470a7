// Command-line driver for the conformal predictive safety filter workbench.
//
// Subcommands cover the full pipeline: gen-data, train-predictor, calibrate,
// fit-gaussian, train-filter, run, evaluate, coverage-report, shift-diagnostic.
// All randomness flows from the single --seed value.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpsf/harness.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      if (!current.empty()) out.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal predictive safety filter workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "config file path (TOML-style key = value sections)");
  app.add_option("--seed", seed, "master seed; every stream derives from it");
  app.add_option("--out", out_dir, "artifact directory");

  auto* gen_data = app.add_subcommand("gen-data", "sample agent episodes and write the datasets");
  auto* train_predictor_cmd =
      app.add_subcommand("train-predictor", "train the trajectory predictor on ytrain.jsonl");
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "compute conformal radii from the calibration set");
  auto* fit_gaussian_cmd =
      app.add_subcommand("fit-gaussian", "fit the Gaussian-interval baseline radii");

  auto* train_filter_cmd = app.add_subcommand("train-filter", "train the safety filter");
  std::string filter_policy = "aggressive";
  std::string filter_radii = "conformal";
  train_filter_cmd->add_option("--policy", filter_policy, "nominal policy: aggressive | orca");
  train_filter_cmd->add_option("--radii", filter_radii, "radii source: conformal | gaussian");

  auto* run_cmd = app.add_subcommand("run", "run one episode and dump the trajectory");
  std::string run_controller = "aggressive";
  std::uint64_t episode_seed = 0;
  run_cmd->add_option("--controller", run_controller,
                      "controller name (aggressive, orca, standstill, cpsf-*, gasf-*)");
  run_cmd->add_option("--episode-seed", episode_seed, "seed of the episode to run");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "paired-seed benchmark across controllers");
  std::string controllers_arg = "aggressive,cpsf-aggressive";
  int eval_episodes = 200;
  evaluate_cmd->add_option("--controllers", controllers_arg, "comma-separated controller names");
  evaluate_cmd->add_option("--episodes", eval_episodes, "episodes per controller (paired seeds)");

  auto* coverage_cmd =
      app.add_subcommand("coverage-report", "per-step coverage table + SVG on the test set");
  auto* shift_cmd =
      app.add_subcommand("shift-diagnostic", "prediction-error histograms by interaction distance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) ? 1 : 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const cpsf::Config cfg = config_path.empty() ? cpsf::Config::from_string("")
                                                 : cpsf::Config::from_file(config_path);
    const cpsf::ArtifactPaths paths{out_dir};

    if (*gen_data) {
      cpsf::cmd_gen_data(cfg, seed, paths);
      std::cout << "datasets written to " << out_dir << "\n";
    } else if (*train_predictor_cmd) {
      cpsf::cmd_train_predictor(cfg, seed, paths);
      std::cout << "predictor written to " << paths.predictor().string() << "\n";
    } else if (*calibrate_cmd) {
      cpsf::cmd_calibrate(cfg, seed, paths);
      std::cout << "radii written to " << paths.conformal_radii().string() << "\n";
    } else if (*fit_gaussian_cmd) {
      cpsf::cmd_fit_gaussian(cfg, seed, paths);
      std::cout << "gaussian radii written to " << paths.gaussian_radii().string() << "\n";
    } else if (*train_filter_cmd) {
      cpsf::cmd_train_filter(cfg, seed, paths, filter_policy, filter_radii);
      std::cout << "filter written for policy " << filter_policy << " (" << filter_radii << ")\n";
    } else if (*run_cmd) {
      const cpsf::EpisodeResult result =
          cpsf::cmd_run(cfg, seed, paths, run_controller, episode_seed);
      std::cout << "collided=" << result.metrics.collided << " failed=" << result.metrics.failed
                << " min_dist=" << result.metrics.min_agent_distance
                << " time_to_goal=" << result.metrics.time_to_goal << "\n";
    } else if (*evaluate_cmd) {
      const cpsf::ExperimentReport report =
          cpsf::cmd_evaluate(cfg, seed, paths, split_csv(controllers_arg), eval_episodes);
      std::printf("%-18s %10s %10s %12s %14s\n", "controller", "collisions", "failures",
                  "min_dist_m", "time_to_goal_s");
      for (const auto& agg : report.aggregates)
        std::printf("%-18s %10d %10d %12.3f %14.3f\n", agg.name.c_str(), agg.collisions,
                    agg.failures, agg.mean_min_distance, agg.mean_time_to_goal);
    } else if (*coverage_cmd) {
      const cpsf::CoverageTable table = cpsf::cmd_coverage_report(cfg, seed, paths);
      std::printf("%3s %12s %12s %10s\n", "h", "mean_err_m", "C_m", "coverage");
      for (std::size_t h = 0; h < table.mean_error.size(); ++h)
        std::printf("%3zu %12.4f %12.4f %10.4f\n", h + 1, table.mean_error[h],
                    table.radii_values[h], table.coverage[h]);
      std::printf("joint coverage %.4f\n", table.joint_coverage);
    } else if (*shift_cmd) {
      const cpsf::ShiftDiagnostic diag = cpsf::cmd_shift_diagnostic(cfg, seed, paths);
      std::cout << "category counts:";
      for (int c : diag.category_counts) std::cout << " " << c;
      std::cout << "\nwithin similarity threshold: " << (diag.within_threshold ? "yes" : "no")
                << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
