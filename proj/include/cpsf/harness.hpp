#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cpsf/filter.hpp"
#include "cpsf/gaussian.hpp"
#include "cpsf/io.hpp"
#include "cpsf/metrics.hpp"

namespace cpsf {

// ---------------------------------------------------------------------------
// Conformal settings resolved from config: delta_bar is either given
// explicitly or derived as delta / T over the online statement steps.
// ---------------------------------------------------------------------------

struct ConformalSettings {
  double delta = 0.01;
  int t_statements = 80;
  double delta_bar = 0.0;
  int t_obs = 8;
  ScoreKind score_kind = ScoreKind::StackedNorm;

  static ConformalSettings from_config(const Config& cfg, const ScenarioConfig& world) {
    ConformalSettings s;
    s.delta = cfg.get_double("conformal.delta", s.delta);
    s.t_statements = static_cast<int>(cfg.get_int("conformal.T_statements", 0));
    if (s.t_statements <= 0) s.t_statements = world.horizon_T;
    s.delta_bar = cfg.get_double("conformal.delta_bar", 0.0);
    if (s.delta_bar <= 0.0) s.delta_bar = compute_delta_bar(s.delta, s.t_statements);
    s.t_obs = static_cast<int>(cfg.get_int("conformal.t_obs", s.t_obs));
    const std::string kind = cfg.get_string("conformal.score", "stacked");
    if (kind == "stacked")
      s.score_kind = ScoreKind::StackedNorm;
    else if (kind == "max_agent")
      s.score_kind = ScoreKind::MaxAgent;
    else
      throw ConfigError("conformal.score must be 'stacked' or 'max_agent'");
    return s;
  }
};

// ---------------------------------------------------------------------------
// Paired-seed evaluation.
// ---------------------------------------------------------------------------

struct NamedController {
  std::string name;
  PolicyFactory factory;
};

struct EpisodeRow {
  std::string controller;
  std::uint64_t seed = 0;
  bool collided = false;
  bool failed = false;
  double min_dist = 0.0;
  double time_to_goal = 0.0;
};

struct ControllerAggregate {
  std::string name;
  int episodes = 0;
  int collisions = 0;
  int failures = 0;
  double collision_pct = 0.0;
  double failure_pct = 0.0;
  double mean_min_distance = 0.0;
  double mean_time_to_goal = 0.0;
};

struct ExperimentReport {
  std::vector<ControllerAggregate> aggregates;
  std::vector<std::uint64_t> seeds;  // one shared list, identical across controllers
  std::string config_hash;
  int num_episodes = 0;
};

inline std::vector<ControllerAggregate> aggregate_rows(const std::vector<EpisodeRow>& rows) {
  std::vector<ControllerAggregate> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : rows) {
    auto it = index.find(row.controller);
    if (it == index.end()) {
      index.emplace(row.controller, out.size());
      out.push_back({row.controller, 0, 0, 0, 0, 0, 0, 0});
      it = index.find(row.controller);
    }
    ControllerAggregate& agg = out[it->second];
    ++agg.episodes;
    if (row.collided) ++agg.collisions;
    if (row.failed) ++agg.failures;
    agg.mean_min_distance += row.min_dist;
    agg.mean_time_to_goal += row.time_to_goal;
  }
  for (auto& agg : out) {
    agg.collision_pct = 100.0 * agg.collisions / agg.episodes;
    agg.failure_pct = 100.0 * agg.failures / agg.episodes;
    agg.mean_min_distance /= agg.episodes;
    agg.mean_time_to_goal /= agg.episodes;
  }
  return out;
}

inline std::vector<std::uint64_t> evaluation_seeds(std::uint64_t master_seed, int episodes) {
  std::vector<std::uint64_t> seeds(episodes);
  for (int i = 0; i < episodes; ++i) seeds[i] = derive_seed(master_seed, "evaluate", i);
  return seeds;
}

// Runs every controller over the identical seed list (paired design).
inline ExperimentReport evaluate(const std::vector<NamedController>& controllers,
                                 const ScenarioConfig& world, int episodes,
                                 std::uint64_t master_seed, std::vector<EpisodeRow>* rows_out,
                                 const std::string& config_hash = "",
                                 const SocialPolicyParams& social = {}) {
  ExperimentReport report;
  report.seeds = evaluation_seeds(master_seed, episodes);
  report.num_episodes = episodes;
  report.config_hash = config_hash;

  std::vector<EpisodeRow> rows;
  rows.reserve(controllers.size() * episodes);
  for (const auto& controller : controllers) {
    for (const std::uint64_t seed : report.seeds) {
      const Scenario scenario = sample_scenario(world, seed);
      const SystemController sys = controller.factory(scenario, world);
      const EpisodeResult result = rollout_episode(world, &sys, seed, social);
      rows.push_back({controller.name, seed, result.metrics.collided, result.metrics.failed,
                      result.metrics.min_agent_distance, result.metrics.time_to_goal});
    }
  }
  report.aggregates = aggregate_rows(rows);
  if (rows_out) *rows_out = std::move(rows);
  return report;
}

inline std::string metrics_csv(const std::vector<EpisodeRow>& rows) {
  std::ostringstream out;
  out << "controller,seed,collided,failed,min_dist_m,time_to_goal_s\n";
  for (const auto& row : rows)
    out << row.controller << "," << row.seed << "," << (row.collided ? 1 : 0) << ","
        << (row.failed ? 1 : 0) << "," << format_double(row.min_dist) << ","
        << format_double(row.time_to_goal) << "\n";
  return out.str();
}

inline std::vector<EpisodeRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("metrics csv: empty");
  std::vector<EpisodeRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpisodeRow row;
    std::string field;
    std::getline(ls, row.controller, ',');
    std::getline(ls, field, ',');
    row.seed = std::stoull(field);
    std::getline(ls, field, ',');
    row.collided = field == "1";
    std::getline(ls, field, ',');
    row.failed = field == "1";
    std::getline(ls, field, ',');
    row.min_dist = std::stod(field);
    std::getline(ls, field, ',');
    row.time_to_goal = std::stod(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& agg : report.aggregates)
    aggregates.push_back({{"controller", agg.name},
                          {"episodes", agg.episodes},
                          {"collisions", agg.collisions},
                          {"failures", agg.failures},
                          {"collision_pct", agg.collision_pct},
                          {"failure_pct", agg.failure_pct},
                          {"mean_min_distance_m", agg.mean_min_distance},
                          {"mean_time_to_goal_s", agg.mean_time_to_goal}});
  return {{"schema_version", 1},
          {"config_hash", report.config_hash},
          {"num_episodes", report.num_episodes},
          {"seeds", report.seeds},
          {"aggregates", aggregates}};
}

// ---------------------------------------------------------------------------
// Coverage report (per-h table + plot data).
// ---------------------------------------------------------------------------

struct CoverageTable {
  std::vector<double> mean_error;
  std::vector<double> q50, q90, q95;
  std::vector<double> radii_values;
  std::vector<double> coverage;
  double joint_coverage = 0.0;
};

inline CoverageTable coverage_table(const NonconformityTable& scores, const ConformalRadii& radii) {
  CoverageTable table;
  const CoverageReport cov = coverage_from_scores(scores, radii);
  table.coverage = cov.per_h;
  table.joint_coverage = cov.joint;
  table.radii_values = radii.C;
  for (const auto& per_h : scores.scores) {
    std::vector<double> sorted = per_h;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double s : sorted) mean += s;
    table.mean_error.push_back(mean / sorted.size());
    auto quantile = [&](double q) {
      const std::size_t idx = std::min(sorted.size() - 1,
                                       static_cast<std::size_t>(q * (sorted.size() - 1) + 0.5));
      return sorted[idx];
    };
    table.q50.push_back(quantile(0.5));
    table.q90.push_back(quantile(0.9));
    table.q95.push_back(quantile(0.95));
  }
  return table;
}

inline std::string coverage_csv(const CoverageTable& table) {
  std::ostringstream out;
  out << "h,mean_error_m,q50_m,q90_m,q95_m,C_m,coverage\n";
  for (std::size_t h = 0; h < table.mean_error.size(); ++h) {
    out << h + 1 << "," << format_double(table.mean_error[h]) << ","
        << format_double(table.q50[h]) << "," << format_double(table.q90[h]) << ","
        << format_double(table.q95[h]) << ",";
    if (std::isinf(table.radii_values[h]))
      out << "inf";
    else
      out << format_double(table.radii_values[h]);
    out << "," << format_double(table.coverage[h]) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Distribution-shift diagnostic: group episodes by minimum inter-agent
// distance and compare prediction-error histograms between adjacent groups.
// ---------------------------------------------------------------------------

inline double min_inter_agent_distance(const TrajectoryRecord& episode) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& snap : episode.steps)
    for (std::size_t a = 0; a < snap.size(); ++a)
      for (std::size_t b = a + 1; b < snap.size(); ++b)
        best = std::min(best, norm(snap.positions[a] - snap.positions[b]));
  return best;
}

// Two-sample Kolmogorov-Smirnov statistic. Ties advance both sides.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double best = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double value = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == value) ++i;
    while (j < b.size() && b[j] == value) ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    best = std::max(best, std::abs(fa - fb));
  }
  return best;
}

struct ShiftDiagnostic {
  static constexpr std::array<double, 4> bin_lower = {0.0, 1.5, 2.5, 3.5};
  std::array<int, 4> category_counts = {0, 0, 0, 0};
  std::vector<int> steps_ahead;                                // e.g. {1, 4, 7}
  std::vector<std::array<std::vector<double>, 4>> errors;      // [step index][category]
  std::vector<std::array<double, 2>> adjacent_ks;              // [step index][cat0-1, cat1-2]
  double similarity_threshold = 0.2;
  bool within_threshold = true;  // over the first three categories, ignoring empties
};

inline ShiftDiagnostic shift_diagnostic(const std::vector<TrajectoryRecord>& episodes,
                                        const PredictorModel& model, int t_obs,
                                        double similarity_threshold,
                                        std::vector<int> steps_ahead = {1, 4, 7}) {
  if (episodes.size() < 100)
    throw InvalidInputError("shift_diagnostic: need at least 100 episodes");
  ShiftDiagnostic diag;
  diag.similarity_threshold = similarity_threshold;
  for (int h : steps_ahead)
    if (h >= 1 && h <= model.horizon) diag.steps_ahead.push_back(h);
  diag.errors.resize(diag.steps_ahead.size());

  for (const auto& episode : episodes) {
    const double min_dist = min_inter_agent_distance(episode);
    int category = 3;
    for (int c = 0; c < 3; ++c)
      if (min_dist >= ShiftDiagnostic::bin_lower[c] &&
          min_dist < ShiftDiagnostic::bin_lower[c + 1])
        category = c;
    if (min_dist >= ShiftDiagnostic::bin_lower[3]) category = 3;
    ++diag.category_counts[category];

    const std::vector<AgentSnapshot> history(episode.steps.begin(),
                                             episode.steps.begin() + t_obs + 1);
    const PredictionBundle bundle = predict(model, history);
    for (std::size_t k = 0; k < diag.steps_ahead.size(); ++k) {
      const int h = diag.steps_ahead[k];
      diag.errors[k][category].push_back(
          nonconformity(episode.steps[t_obs + h], bundle.predicted[h - 1]));
    }
  }

  diag.adjacent_ks.resize(diag.steps_ahead.size());
  for (std::size_t k = 0; k < diag.steps_ahead.size(); ++k) {
    for (int pair = 0; pair < 2; ++pair) {
      const double ks = ks_statistic(diag.errors[k][pair], diag.errors[k][pair + 1]);
      diag.adjacent_ks[k][pair] = ks;
      if (!std::isnan(ks) && ks > similarity_threshold) diag.within_threshold = false;
    }
  }
  return diag;
}

inline nlohmann::json shift_to_json(const ShiftDiagnostic& diag) {
  nlohmann::json per_step = nlohmann::json::array();
  for (std::size_t k = 0; k < diag.steps_ahead.size(); ++k) {
    nlohmann::json ks = nlohmann::json::array();
    for (int pair = 0; pair < 2; ++pair) {
      if (std::isnan(diag.adjacent_ks[k][pair]))
        ks.push_back(nullptr);
      else
        ks.push_back(diag.adjacent_ks[k][pair]);
    }
    per_step.push_back({{"h", diag.steps_ahead[k]}, {"adjacent_ks", ks}});
  }
  return {{"schema_version", 1},
          {"category_lower_bounds", {0.0, 1.5, 2.5, 3.5}},
          {"category_counts", diag.category_counts},
          {"similarity_threshold", diag.similarity_threshold},
          {"within_threshold", diag.within_threshold},
          {"per_step", per_step}};
}

inline std::string shift_histograms_csv(const ShiftDiagnostic& diag, int bins = 20) {
  std::ostringstream out;
  out << "h,category,bin_lo_m,bin_hi_m,count\n";
  for (std::size_t k = 0; k < diag.steps_ahead.size(); ++k) {
    double peak = 1e-9;
    for (int c = 0; c < 4; ++c)
      for (double e : diag.errors[k][c]) peak = std::max(peak, e);
    for (int c = 0; c < 4; ++c) {
      std::vector<int> counts(bins, 0);
      for (double e : diag.errors[k][c]) {
        int b = static_cast<int>(e / peak * bins);
        counts[std::min(b, bins - 1)] += 1;
      }
      for (int b = 0; b < bins; ++b)
        out << diag.steps_ahead[k] << "," << c << "," << format_double(peak * b / bins) << ","
            << format_double(peak * (b + 1) / bins) << "," << counts[b] << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Artifact store: file layout and loading with actionable errors.
// ---------------------------------------------------------------------------

struct ArtifactPaths {
  std::filesystem::path dir;

  std::filesystem::path ytrain() const { return dir / "ytrain.jsonl"; }
  std::filesystem::path sftrain() const { return dir / "sftrain.jsonl"; }
  std::filesystem::path calibration() const { return dir / "cal.jsonl"; }
  std::filesystem::path test_set() const { return dir / "test.jsonl"; }
  std::filesystem::path predictor() const { return dir / "predictor.json"; }
  std::filesystem::path predictor_loss() const { return dir / "predictor_loss.csv"; }
  std::filesystem::path conformal_radii() const { return dir / "radii_conformal.json"; }
  std::filesystem::path calibration_coverage() const { return dir / "calibration_coverage.csv"; }
  std::filesystem::path gaussian_radii() const { return dir / "radii_gaussian.json"; }
  std::filesystem::path filter_model(const std::string& policy, const std::string& method) const {
    return dir / ("filter_" + policy + "_" + method + ".json");
  }
  std::filesystem::path filter_loss(const std::string& policy, const std::string& method) const {
    return dir / ("filter_" + policy + "_" + method + "_loss.csv");
  }
  std::filesystem::path metrics() const { return dir / "metrics.csv"; }
  std::filesystem::path report() const { return dir / "report.json"; }
  std::filesystem::path coverage_csv_path() const { return dir / "coverage.csv"; }
  std::filesystem::path coverage_svg_path() const { return dir / "coverage.svg"; }
  std::filesystem::path shift_report() const { return dir / "shift_report.json"; }
  std::filesystem::path shift_histograms() const { return dir / "shift_histograms.csv"; }
};

namespace detail {

inline void require_artifact(const std::filesystem::path& path, const std::string& subcommand) {
  if (!std::filesystem::exists(path))
    throw MissingArtifactError("missing artifact " + path.string() + "; run `" + subcommand +
                               "` first");
}

}  // namespace detail

inline std::vector<TrajectoryRecord> load_episodes(const std::filesystem::path& path,
                                                   const std::string& subcommand = "gen-data") {
  detail::require_artifact(path, subcommand);
  return read_episodes_jsonl(path);
}

inline PredictorModel load_predictor(const ArtifactPaths& paths) {
  detail::require_artifact(paths.predictor(), "train-predictor");
  return predictor_from_json(read_json_file(paths.predictor()));
}

inline ConformalRadii load_conformal_radii(const ArtifactPaths& paths) {
  detail::require_artifact(paths.conformal_radii(), "calibrate");
  return radii_from_json(read_json_file(paths.conformal_radii()));
}

inline GaussianRadii load_gaussian_radii(const ArtifactPaths& paths) {
  detail::require_artifact(paths.gaussian_radii(), "fit-gaussian");
  return gaussian_radii_from_json(read_json_file(paths.gaussian_radii()));
}

inline FilterModel load_filter(const ArtifactPaths& paths, const std::string& policy,
                               const std::string& method) {
  const std::string radii_flag = method == "gauss" ? " --radii gaussian" : "";
  detail::require_artifact(paths.filter_model(policy, method),
                           "train-filter --policy " + policy + radii_flag);
  return filter_from_json(read_json_file(paths.filter_model(policy, method)));
}

// ---------------------------------------------------------------------------
// Controller registry.
// ---------------------------------------------------------------------------

inline PolicyFactory make_policy_factory(const std::string& policy, double orca_time_horizon,
                                         double orca_margin = 0.1) {
  if (policy == "aggressive")
    return [](const Scenario& sc, const ScenarioConfig& cfg) {
      return make_aggressive_controller(sc.system_goal, cfg);
    };
  if (policy == "orca")
    return [orca_time_horizon, orca_margin](const Scenario& sc, const ScenarioConfig& cfg) {
      return make_orca_controller(sc.system_goal, cfg, orca_time_horizon, orca_margin);
    };
  if (policy == "standstill")
    return [](const Scenario&, const ScenarioConfig&) { return make_standstill_controller(); };
  throw ConfigError("unknown nominal policy: " + policy);
}

// Resolves a controller name ("aggressive", "orca", "standstill",
// "cpsf-aggressive", "cpsf-orca", "gasf-aggressive", "gasf-orca") into a
// runnable factory, loading artifacts as needed.
inline NamedController make_named_controller(const std::string& name, const ArtifactPaths& paths,
                                             const ConformalSettings& settings,
                                             double orca_time_horizon, double orca_margin = 0.1) {
  const auto dash = name.find('-');
  const std::string prefix = dash == std::string::npos ? name : name.substr(0, dash);
  if (prefix != "cpsf" && prefix != "gasf") {
    return {name, make_policy_factory(name, orca_time_horizon, orca_margin)};
  }

  const std::string base = name.substr(dash + 1);
  const std::string method = prefix == "cpsf" ? "cp" : "gauss";
  auto predictor = std::make_shared<PredictorModel>(load_predictor(paths));
  auto filter = std::make_shared<FilterModel>(load_filter(paths, base, method));
  auto radii = std::make_shared<ConformalRadii>(
      prefix == "cpsf" ? load_conformal_radii(paths) : load_gaussian_radii(paths).as_radii());
  const PolicyFactory nominal_factory = make_policy_factory(base, orca_time_horizon, orca_margin);
  const int t_obs = settings.t_obs;

  PolicyFactory factory = [predictor, filter, radii, nominal_factory, t_obs](
                              const Scenario& sc, const ScenarioConfig& cfg) -> SystemController {
    const SystemController nominal = nominal_factory(sc, cfg);
    return make_filtered_controller(*predictor, nominal, *filter, *radii, cfg.dt, t_obs);
  };
  return {name, factory};
}

// ---------------------------------------------------------------------------
// Pipeline commands (shared by the CLI and the acceptance suite).
// ---------------------------------------------------------------------------

inline SocialPolicyParams social_params_from_config(const Config& cfg) {
  SocialPolicyParams p;
  p.sensing_radius = cfg.get_double("agents.sensing_radius", p.sensing_radius);
  p.repulsion_gain = cfg.get_double("agents.repulsion_gain", p.repulsion_gain);
  p.repulsion_falloff = cfg.get_double("agents.repulsion_falloff", p.repulsion_falloff);
  p.tangential_gain = cfg.get_double("agents.tangential_gain", p.tangential_gain);
  p.slow_radius = cfg.get_double("agents.slow_radius", p.slow_radius);
  return p;
}

inline std::string config_hash_hex(const Config& cfg) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(cfg.content_hash()));
  return buf;
}

inline void cmd_gen_data(const Config& cfg, std::uint64_t seed, const ArtifactPaths& paths) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const SocialPolicyParams social = social_params_from_config(cfg);
  const int K = static_cast<int>(cfg.get_int("data.K", 4000));
  SplitFractions fractions;
  fractions.predictor_train = cfg.get_double("data.frac_predictor", 0.5);
  fractions.filter_train = cfg.get_double("data.frac_filter", 0.5);
  fractions.calibration = cfg.get_double("data.frac_cal", 0.0);
  const int extra_cal = static_cast<int>(cfg.get_int("data.extra_calibration", 1000));
  const int test_episodes = static_cast<int>(cfg.get_int("data.test_episodes", 1000));

  const DatasetSplit split = generate_dataset(world, K, fractions, extra_cal, seed, social);
  std::filesystem::create_directories(paths.dir);
  write_episodes_jsonl(paths.ytrain(), split.predictor_train);
  write_episodes_jsonl(paths.sftrain(), split.filter_train);
  write_episodes_jsonl(paths.calibration(), split.calibration);

  std::vector<TrajectoryRecord> test_set;
  test_set.reserve(test_episodes);
  for (int i = 0; i < test_episodes; ++i)
    test_set.push_back(rollout_agents_episode(world, derive_seed(seed, "testset", i), social));
  write_episodes_jsonl(paths.test_set(), test_set);
}

inline void cmd_train_predictor(const Config& cfg, std::uint64_t seed, const ArtifactPaths& paths) {
  const auto dataset = load_episodes(paths.ytrain());
  PredictorTrainConfig train_cfg = PredictorTrainConfig::from_config(cfg);
  train_cfg.seed = seed;
  const PredictorTrainResult result = train_predictor(dataset, train_cfg);
  if (result.diverged)
    throw TrainingDivergenceError(
        "train-predictor: loss went non-finite; best finite checkpoint was kept, lower the "
        "learning rate to train further");
  write_json_file(paths.predictor(), predictor_to_json(result.model));

  std::ostringstream curve;
  curve << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < result.train_loss_curve.size(); ++e)
    curve << e << "," << format_double(result.train_loss_curve[e]) << ","
          << format_double(result.val_loss_curve[e]) << "\n";
  write_text_file(paths.predictor_loss(), curve.str());
}

inline void cmd_calibrate(const Config& cfg, std::uint64_t /*seed*/, const ArtifactPaths& paths) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const PredictorModel model = load_predictor(paths);
  const auto calibration = load_episodes(paths.calibration());

  const NonconformityTable scores =
      score_episodes(model, calibration, settings.t_obs, settings.score_kind);
  ConformalRadii radii = calibrate_scores(scores, settings.delta_bar);
  radii.delta = settings.delta;
  write_json_file(paths.conformal_radii(), radii_to_json(radii));
  write_text_file(paths.calibration_coverage(), coverage_csv(coverage_table(scores, radii)));
}

inline void cmd_fit_gaussian(const Config& cfg, std::uint64_t /*seed*/, const ArtifactPaths& paths) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const PredictorModel model = load_predictor(paths);
  const auto calibration = load_episodes(paths.calibration());
  const GaussianRadii g =
      fit_gaussian(model, calibration, settings.t_obs, settings.delta_bar, settings.score_kind);
  write_json_file(paths.gaussian_radii(), gaussian_radii_to_json(g));
}

inline void cmd_train_filter(const Config& cfg, std::uint64_t seed, const ArtifactPaths& paths,
                             const std::string& policy, const std::string& radii_kind) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const PredictorModel model = load_predictor(paths);
  const auto episodes = load_episodes(paths.sftrain());

  ConformalRadii radii;
  std::string method;
  if (radii_kind == "conformal") {
    radii = load_conformal_radii(paths);
    method = "cp";
  } else if (radii_kind == "gaussian") {
    radii = load_gaussian_radii(paths).as_radii();
    method = "gauss";
  } else {
    throw ConfigError("train-filter: radii kind must be 'conformal' or 'gaussian'");
  }

  SftrainConfig sft;
  sft.t_obs = settings.t_obs;
  sft.cuts_per_episode = static_cast<int>(cfg.get_int("filter.cuts_per_episode", 1));
  sft.cut_stride = static_cast<int>(cfg.get_int("filter.cut_stride", 4));
  sft.jitter_copies = static_cast<int>(cfg.get_int("filter.jitter_copies", 0));
  sft.jitter_pos = cfg.get_double("filter.jitter_pos", sft.jitter_pos);
  sft.jitter_heading = cfg.get_double("filter.jitter_heading", sft.jitter_heading);
  sft.jitter_speed = cfg.get_double("filter.jitter_speed", sft.jitter_speed);
  sft.jitter_seed = seed;

  const double orca_horizon = cfg.get_double("harness.orca_time_horizon", 2.0);
  const double orca_margin = cfg.get_double("harness.orca_margin", 0.1);
  const PolicyFactory factory = make_policy_factory(policy, orca_horizon, orca_margin);
  const auto records = build_sftrain(episodes, model, factory, radii, world, sft);

  FilterTrainConfig train_cfg = FilterTrainConfig::from_config(cfg, world);
  train_cfg.seed = seed;
  const FilterTrainResult result = train_filter(records, world, train_cfg, policy);
  if (result.diverged)
    throw TrainingDivergenceError("train-filter: loss went non-finite; lower the learning rate");
  write_json_file(paths.filter_model(policy, method), filter_to_json(result.model));

  std::ostringstream curve;
  curve << "epoch,train_loss,val_imitation,val_violation_rate\n";
  for (std::size_t e = 0; e < result.train_loss_curve.size(); ++e)
    curve << e << "," << format_double(result.train_loss_curve[e]) << ","
          << format_double(result.val_imitation_curve[e]) << ","
          << format_double(result.val_violation_rate_curve[e]) << "\n";
  write_text_file(paths.filter_loss(policy, method), curve.str());
}

inline ExperimentReport cmd_evaluate(const Config& cfg, std::uint64_t seed,
                                     const ArtifactPaths& paths,
                                     const std::vector<std::string>& controller_names,
                                     int episodes) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const SocialPolicyParams social = social_params_from_config(cfg);
  const double orca_horizon = cfg.get_double("harness.orca_time_horizon", 2.0);
  const double orca_margin = cfg.get_double("harness.orca_margin", 0.1);

  std::vector<NamedController> controllers;
  controllers.reserve(controller_names.size());
  for (const auto& name : controller_names)
    controllers.push_back(make_named_controller(name, paths, settings, orca_horizon, orca_margin));

  std::vector<EpisodeRow> rows;
  const ExperimentReport report =
      evaluate(controllers, world, episodes, seed, &rows, config_hash_hex(cfg), social);
  std::filesystem::create_directories(paths.dir);
  write_text_file(paths.metrics(), metrics_csv(rows));
  write_json_file(paths.report(), report_to_json(report));
  return report;
}

inline CoverageTable cmd_coverage_report(const Config& cfg, std::uint64_t /*seed*/,
                                         const ArtifactPaths& paths) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const PredictorModel model = load_predictor(paths);
  const ConformalRadii radii = load_conformal_radii(paths);
  const auto test_set = load_episodes(paths.test_set());

  const NonconformityTable scores =
      score_episodes(model, test_set, settings.t_obs, settings.score_kind);
  const CoverageTable table = coverage_table(scores, radii);
  write_text_file(paths.coverage_csv_path(), coverage_csv(table));
  write_text_file(paths.coverage_svg_path(),
                  coverage_svg(table.mean_error, table.q90, table.radii_values));
  return table;
}

inline ShiftDiagnostic cmd_shift_diagnostic(const Config& cfg, std::uint64_t /*seed*/,
                                            const ArtifactPaths& paths) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const PredictorModel model = load_predictor(paths);
  const auto test_set = load_episodes(paths.test_set());
  const double threshold = cfg.get_double("harness.shift_similarity_threshold", 0.2);

  const ShiftDiagnostic diag = shift_diagnostic(test_set, model, settings.t_obs, threshold);
  write_json_file(paths.shift_report(), shift_to_json(diag));
  write_text_file(paths.shift_histograms(), shift_histograms_csv(diag));
  return diag;
}

inline EpisodeResult cmd_run(const Config& cfg, std::uint64_t seed, const ArtifactPaths& paths,
                             const std::string& controller_name, std::uint64_t episode_seed) {
  const ScenarioConfig world = ScenarioConfig::from_config(cfg);
  const ConformalSettings settings = ConformalSettings::from_config(cfg, world);
  const SocialPolicyParams social = social_params_from_config(cfg);
  const double orca_horizon = cfg.get_double("harness.orca_time_horizon", 2.0);
  const double orca_margin = cfg.get_double("harness.orca_margin", 0.1);
  const NamedController controller =
      make_named_controller(controller_name, paths, settings, orca_horizon, orca_margin);

  const Scenario scenario = sample_scenario(world, episode_seed);
  const SystemController sys = controller.factory(scenario, world);
  const EpisodeResult result = rollout_episode(world, &sys, episode_seed, social);

  nlohmann::json j = episode_to_json(result.record);
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : result.record.system_states)
    states.push_back({s.pos_x, s.pos_y, s.heading, s.speed});
  j["system"] = states;
  j["system_goal"] = {result.record.system_goal.x, result.record.system_goal.y};
  j["metrics"] = {{"collided", result.metrics.collided},
                  {"failed", result.metrics.failed},
                  {"min_agent_distance_m", result.metrics.min_agent_distance},
                  {"time_to_goal_s", result.metrics.time_to_goal},
                  {"steps_taken", result.metrics.steps_taken}};
  std::filesystem::create_directories(paths.dir);
  write_json_file(paths.dir / ("trajectory_" + controller_name + "_" +
                               std::to_string(episode_seed) + ".json"),
                  j);
  (void)seed;
  return result;
}

}  // namespace cpsf
