#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cpsf/harness.hpp"

using namespace cpsf;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config parses sections, comments and typed values") {
  const Config cfg = Config::from_string(
      "# top comment\n"
      "[world]\n"
      "num_agents = 4   # inline comment\n"
      "dt = 0.1\n"
      "name = \"desk # case\"\n"
      "[filter]\n"
      "penalty_weight = 10\n"
      "enabled = true\n");
  CHECK(cfg.get_int("world.num_agents", 0) == 4);
  CHECK(cfg.get_double("world.dt", 0) == 0.1);
  CHECK(cfg.get_string("world.name", "") == "desk # case");
  CHECK(cfg.get_double("filter.penalty_weight", 0) == 10.0);
  CHECK(cfg.get_bool("filter.enabled", false));
  CHECK(cfg.get_int("world.missing", 7) == 7);
  CHECK_THROWS_AS(Config::from_string("[world\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("just a line\n"), ConfigError);
  const Config bad = Config::from_string("[a]\nx = notanumber\n");
  CHECK_THROWS_AS(bad.get_double("a.x", 0), ConfigError);
}

TEST_CASE("config hash is stable and content-sensitive") {
  const Config a = Config::from_string("[w]\nx = 1\n");
  const Config b = Config::from_string("[w]\nx = 1\n");
  const Config c = Config::from_string("[w]\nx = 2\n");
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("conformal settings derive delta_bar unless overridden") {
  ScenarioConfig world;
  world.horizon_T = 80;
  const Config derived = Config::from_string("[conformal]\ndelta = 0.01\n");
  const ConformalSettings s1 = ConformalSettings::from_config(derived, world);
  CHECK(s1.delta_bar == Catch::Approx(0.000125).margin(1e-15));
  const Config overridden = Config::from_string("[conformal]\ndelta_bar = 0.05\n");
  const ConformalSettings s2 = ConformalSettings::from_config(overridden, world);
  CHECK(s2.delta_bar == 0.05);
}

TEST_CASE("episode JSONL round-trips and is byte-deterministic") {
  TempDir tmp("cpsf_io_test");
  ScenarioConfig cfg;
  cfg.num_agents = 3;
  cfg.horizon_T = 12;
  std::vector<TrajectoryRecord> episodes;
  for (int i = 0; i < 4; ++i) episodes.push_back(rollout_agents_episode(cfg, 100 + i));

  const auto file_a = tmp.path / "a.jsonl";
  const auto file_b = tmp.path / "b.jsonl";
  write_episodes_jsonl(file_a, episodes);
  write_episodes_jsonl(file_b, episodes);
  CHECK(slurp(file_a) == slurp(file_b));

  const auto back = read_episodes_jsonl(file_a);
  REQUIRE(back.size() == episodes.size());
  for (std::size_t e = 0; e < back.size(); ++e) {
    CHECK(back[e].seed == episodes[e].seed);
    CHECK(back[e].num_agents == episodes[e].num_agents);
    REQUIRE(back[e].steps.size() == episodes[e].steps.size());
    for (std::size_t t = 0; t < back[e].steps.size(); ++t)
      for (int j = 0; j < back[e].num_agents; ++j)
        REQUIRE(back[e].steps[t].positions[j] == episodes[e].steps[t].positions[j]);
  }
}

TEST_CASE("standstill controller fails every episode without collisions") {
  ScenarioConfig world;
  world.num_agents = 1;
  world.horizon_T = 15;
  world.agent_crossing = false;  // agents routed far away
  world.agent_min_depth = 4.0;
  std::vector<NamedController> controllers;
  controllers.push_back({"standstill", make_policy_factory("standstill", 2.0)});

  std::vector<EpisodeRow> rows;
  const ExperimentReport report = evaluate(controllers, world, 20, 5, &rows);
  REQUIRE(report.aggregates.size() == 1);
  CHECK(report.aggregates[0].failure_pct == 100.0);
  CHECK(report.aggregates[0].collision_pct == 0.0);
  CHECK(report.seeds.size() == 20);
}

TEST_CASE("metrics CSV recomputes to identical aggregates") {
  ScenarioConfig world;
  world.num_agents = 2;
  world.horizon_T = 25;
  std::vector<NamedController> controllers;
  controllers.push_back({"aggressive", make_policy_factory("aggressive", 2.0)});
  controllers.push_back({"orca", make_policy_factory("orca", 2.0)});

  std::vector<EpisodeRow> rows;
  const ExperimentReport report = evaluate(controllers, world, 15, 9, &rows);
  const std::string csv = metrics_csv(rows);
  const std::vector<EpisodeRow> parsed = parse_metrics_csv(csv);
  REQUIRE(parsed.size() == rows.size());
  const auto recomputed = aggregate_rows(parsed);
  REQUIRE(recomputed.size() == report.aggregates.size());
  for (std::size_t i = 0; i < recomputed.size(); ++i) {
    CHECK(recomputed[i].name == report.aggregates[i].name);
    CHECK(recomputed[i].collisions == report.aggregates[i].collisions);
    CHECK(recomputed[i].failures == report.aggregates[i].failures);
    CHECK(recomputed[i].mean_min_distance == report.aggregates[i].mean_min_distance);
    CHECK(recomputed[i].mean_time_to_goal == report.aggregates[i].mean_time_to_goal);
  }
}

TEST_CASE("every episode is exactly one of reached, collided, failed") {
  ScenarioConfig world;
  world.num_agents = 3;
  world.horizon_T = 40;
  std::vector<NamedController> controllers;
  controllers.push_back({"aggressive", make_policy_factory("aggressive", 2.0)});
  std::vector<EpisodeRow> rows;
  evaluate(controllers, world, 40, 11, &rows);
  for (const auto& row : rows) {
    const int reached = (!row.collided && !row.failed) ? 1 : 0;
    const int outcomes = reached + (row.collided ? 1 : 0) + (row.failed ? 1 : 0);
    REQUIRE(outcomes == 1);
    REQUIRE(row.time_to_goal <= world.horizon_T * world.dt + 1e-12);
  }
}

TEST_CASE("ks statistic basics") {
  CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(ks_statistic({1, 2, 3}, {10, 20, 30}) == 1.0);
  CHECK(std::isnan(ks_statistic({}, {1.0})));
  const double mid = ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6});
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
}

TEST_CASE("min inter-agent distance over an episode") {
  TrajectoryRecord rec;
  rec.num_agents = 2;
  AgentSnapshot far, near;
  far.positions = {{0, 0}, {5, 0}};
  near.positions = {{0, 0}, {1.25, 0}};
  rec.steps = {far, near, far};
  CHECK(min_inter_agent_distance(rec) == Catch::Approx(1.25).margin(1e-12));
}

TEST_CASE("shift diagnostic reports empty categories without error") {
  // all episodes far apart: only the last category is populated
  PredictorModel model;
  model.num_agents = 2;
  model.horizon = 7;
  model.history_window = 4;
  Rng rng(121);
  model.net = make_lstm(4, 6, 1, 28, rng);

  std::vector<TrajectoryRecord> episodes;
  for (int e = 0; e < 120; ++e) {
    TrajectoryRecord rec;
    rec.num_agents = 2;
    rec.dt = 0.1;
    for (int t = 0; t <= 14; ++t) {
      AgentSnapshot snap;
      snap.positions = {{-4.0 + 0.02 * t, -4}, {4.0 - 0.02 * t, 4}};  // always > 3.5 apart
      rec.steps.push_back(snap);
    }
    episodes.push_back(std::move(rec));
  }

  const ShiftDiagnostic diag = shift_diagnostic(episodes, model, 4, 0.2);
  CHECK(diag.category_counts[0] == 0);
  CHECK(diag.category_counts[1] == 0);
  CHECK(diag.category_counts[2] == 0);
  CHECK(diag.category_counts[3] == 120);
  REQUIRE(diag.steps_ahead == std::vector<int>{1, 4, 7});   // three panels
  for (const auto& ks_pair : diag.adjacent_ks) {
    CHECK(std::isnan(ks_pair[0]));  // empty adjacent categories -> no statistic
    CHECK(std::isnan(ks_pair[1]));
  }
  CHECK(diag.within_threshold);  // empties are not failures
  CHECK_THROWS_AS(shift_diagnostic({episodes[0]}, model, 4, 0.2), InvalidInputError);
}

TEST_CASE("coverage table and CSV are deterministic") {
  NonconformityTable scores;
  scores.n = 40;
  Rng rng(131);
  scores.scores.resize(3);
  for (auto& per_h : scores.scores) {
    per_h.resize(40);
    for (auto& s : per_h) s = rng.uniform(0.1, 1.5);
  }
  ConformalRadii radii;
  radii.C = {0.9, 1.1, std::numeric_limits<double>::infinity()};

  const CoverageTable table = coverage_table(scores, radii);
  REQUIRE(table.coverage.size() == 3);
  CHECK(table.coverage[2] == 1.0);  // infinite radius covers everything
  for (int h = 0; h < 3; ++h) {
    CHECK(table.q50[h] <= table.q90[h]);
    CHECK(table.q90[h] <= table.q95[h]);
  }
  const std::string csv1 = coverage_csv(table);
  const std::string csv2 = coverage_csv(coverage_table(scores, radii));
  CHECK(csv1 == csv2);
  CHECK(csv1.find("inf") != std::string::npos);

  const std::string svg1 = coverage_svg(table.mean_error, table.q90, table.radii_values);
  const std::string svg2 = coverage_svg(table.mean_error, table.q90, table.radii_values);
  CHECK(svg1 == svg2);
  CHECK(svg1.find("<svg") == 0);
}

TEST_CASE("gen-data command writes deterministic dataset files") {
  TempDir tmp_a("cpsf_gen_a");
  TempDir tmp_b("cpsf_gen_b");
  const Config cfg = Config::from_string(
      "[world]\nnum_agents = 2\nhorizon_T = 18\n"
      "[data]\nK = 6\nextra_calibration = 2\ntest_episodes = 3\n");
  cmd_gen_data(cfg, 77, ArtifactPaths{tmp_a.path});
  cmd_gen_data(cfg, 77, ArtifactPaths{tmp_b.path});
  for (const char* name : {"ytrain.jsonl", "sftrain.jsonl", "cal.jsonl", "test.jsonl"}) {
    INFO(name);
    CHECK(slurp(tmp_a.path / name) == slurp(tmp_b.path / name));
  }
  const auto ytrain = read_episodes_jsonl(tmp_a.path / "ytrain.jsonl");
  CHECK(ytrain.size() == 3);
  const auto cal = read_episodes_jsonl(tmp_a.path / "cal.jsonl");
  CHECK(cal.size() == 2);
}

TEST_CASE("missing artifacts raise errors naming the producing subcommand") {
  TempDir tmp("cpsf_missing");
  const ArtifactPaths paths{tmp.path};
  CHECK_THROWS_WITH(load_predictor(paths), Catch::Matchers::ContainsSubstring("train-predictor"));
  CHECK_THROWS_WITH(load_conformal_radii(paths), Catch::Matchers::ContainsSubstring("calibrate"));
  CHECK_THROWS_WITH(load_gaussian_radii(paths), Catch::Matchers::ContainsSubstring("fit-gaussian"));
  CHECK_THROWS_WITH(load_filter(paths, "aggressive", "cp"),
                    Catch::Matchers::ContainsSubstring("train-filter"));
  CHECK_THROWS_AS(load_filter(paths, "aggressive", "cp"), MissingArtifactError);
}

TEST_CASE("unknown controller and policy names are rejected") {
  CHECK_THROWS_AS(make_policy_factory("warp-drive", 2.0), ConfigError);
}
