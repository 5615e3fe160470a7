#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpsf/predictor.hpp"

namespace cpsf {

enum class ScoreKind {
  StackedNorm,  // Euclidean norm of the stacked 2m-dimensional error
  MaxAgent,     // max over agents of per-agent position error
};

// Norm of the stacked error vector across all agents.
inline double nonconformity(const AgentSnapshot& truth, const AgentSnapshot& predicted,
                            ScoreKind kind = ScoreKind::StackedNorm) {
  if (truth.size() != predicted.size())
    throw ShapeError("nonconformity: agent count mismatch (" + std::to_string(truth.size()) +
                     " vs " + std::to_string(predicted.size()) + ")");
  if (kind == ScoreKind::StackedNorm) {
    double sum = 0.0;
    for (std::size_t j = 0; j < truth.size(); ++j)
      sum += norm_sq(truth.positions[j] - predicted.positions[j]);
    return std::sqrt(sum);
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j)
    worst = std::max(worst, norm(truth.positions[j] - predicted.positions[j]));
  return worst;
}

inline double compute_delta_bar(double delta, int T) {
  if (!(delta > 0.0 && delta < 1.0))
    throw InvalidInputError("compute_delta_bar: delta must be in (0, 1)");
  if (T < 1) throw InvalidInputError("compute_delta_bar: T must be >= 1");
  return delta / static_cast<double>(T);
}

// Per prediction step h, one score for each calibration episode.
struct NonconformityTable {
  std::vector<std::vector<double>> scores;  // [h][episode]
  int n = 0;

  int horizon() const { return static_cast<int>(scores.size()); }
};

// Scores a calibration set at a single observation cut: predictions are
// issued from the history up to t_obs and scored against the next H true
// snapshots, one score per episode per h.
inline NonconformityTable score_episodes(const PredictorModel& model,
                                         const std::vector<TrajectoryRecord>& episodes, int t_obs,
                                         ScoreKind kind = ScoreKind::StackedNorm) {
  NonconformityTable table;
  table.n = static_cast<int>(episodes.size());
  table.scores.assign(static_cast<std::size_t>(model.horizon), {});
  for (auto& per_h : table.scores) per_h.reserve(episodes.size());

  for (const auto& episode : episodes) {
    if (static_cast<int>(episode.steps.size()) <= t_obs + model.horizon)
      throw InvalidInputError("score_episodes: episode too short for t_obs + horizon");
    const std::vector<AgentSnapshot> history(episode.steps.begin(),
                                             episode.steps.begin() + t_obs + 1);
    const PredictionBundle bundle = predict(model, history);
    for (int h = 1; h <= model.horizon; ++h)
      table.scores[h - 1].push_back(
          nonconformity(episode.steps[t_obs + h], bundle.predicted[h - 1], kind));
  }
  return table;
}

struct ConformalRadii {
  std::vector<double> C;  // per h; +infinity when p exceeds the score count
  double delta = 0.0;     // mission-level failure probability (0 when delta_bar set directly)
  double delta_bar = 0.0;
  int n = 0;
  int p = 0;

  bool any_infinite() const {
    return std::any_of(C.begin(), C.end(), [](double c) { return std::isinf(c); });
  }
  int horizon() const { return static_cast<int>(C.size()); }
};

// Split-conformal quantile: append the infinity sentinel, sort, take the
// p-th smallest with p = ceil((n+1)(1 - delta_bar)). Infinite radii are a
// valid result and are reported loudly with the minimum usable n.
inline ConformalRadii calibrate_scores(const NonconformityTable& table, double delta_bar,
                                       std::ostream* warn_stream = &std::cerr) {
  if (!(delta_bar > 0.0 && delta_bar < 1.0))
    throw InvalidInputError("calibrate_scores: delta_bar must be in (0, 1)");
  ConformalRadii radii;
  radii.delta_bar = delta_bar;
  radii.n = table.n;
  radii.p = static_cast<int>(std::ceil((table.n + 1) * (1.0 - delta_bar)));
  radii.C.reserve(table.scores.size());

  for (const auto& per_h : table.scores) {
    if (static_cast<int>(per_h.size()) != table.n)
      throw InvalidInputError("calibrate_scores: inconsistent score counts");
    if (radii.p > table.n) {
      radii.C.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    std::vector<double> sorted = per_h;
    std::nth_element(sorted.begin(), sorted.begin() + (radii.p - 1), sorted.end());
    radii.C.push_back(sorted[radii.p - 1]);
  }

  if (radii.any_infinite() && warn_stream) {
    const int min_n = static_cast<int>(std::ceil(1.0 / delta_bar)) - 1;
    (*warn_stream) << "WARNING: conformal radii are infinite: quantile index p=" << radii.p
                   << " exceeds calibration size n=" << radii.n
                   << "; need n >= " << min_n << " for delta_bar=" << delta_bar << "\n";
  }
  return radii;
}

// Full calibration pass per the offline procedure: delta_bar = delta / T.
inline ConformalRadii calibrate(const PredictorModel& model,
                                const std::vector<TrajectoryRecord>& calibration, double delta,
                                int T, int t_obs, ScoreKind kind = ScoreKind::StackedNorm,
                                std::ostream* warn_stream = &std::cerr) {
  const double delta_bar = compute_delta_bar(delta, T);
  const NonconformityTable table = score_episodes(model, calibration, t_obs, kind);
  ConformalRadii radii = calibrate_scores(table, delta_bar, warn_stream);
  radii.delta = delta;
  return radii;
}

struct CoverageReport {
  std::vector<double> per_h;  // fraction of test episodes with score <= C_h
  double joint = 0.0;         // fraction covered at every h simultaneously
};

inline CoverageReport coverage_from_scores(const NonconformityTable& table,
                                           const ConformalRadii& radii) {
  if (table.horizon() != radii.horizon())
    throw InvalidInputError("coverage_from_scores: horizon mismatch");
  if (table.n == 0) throw InvalidInputError("coverage_from_scores: empty test set");
  CoverageReport report;
  report.per_h.assign(table.scores.size(), 0.0);
  int joint_hits = 0;
  for (int e = 0; e < table.n; ++e) {
    bool all = true;
    for (std::size_t h = 0; h < table.scores.size(); ++h) {
      const bool inside = table.scores[h][e] <= radii.C[h];
      if (inside) report.per_h[h] += 1.0;
      all = all && inside;
    }
    if (all) ++joint_hits;
  }
  for (auto& f : report.per_h) f /= table.n;
  report.joint = static_cast<double>(joint_hits) / table.n;
  return report;
}

inline CoverageReport empirical_coverage(const PredictorModel& model, const ConformalRadii& radii,
                                         const std::vector<TrajectoryRecord>& test_episodes,
                                         int t_obs, ScoreKind kind = ScoreKind::StackedNorm) {
  if (radii.horizon() != model.horizon)
    throw InvalidInputError("empirical_coverage: radii/model horizon mismatch");
  const NonconformityTable table = score_episodes(model, test_episodes, t_obs, kind);
  return coverage_from_scores(table, radii);
}

// ---------------------------------------------------------------------------
// Radii container (shared with the Gaussian baseline via the method tag).
// ---------------------------------------------------------------------------

inline nlohmann::json radii_to_json(const ConformalRadii& radii,
                                    const std::string& method = "conformal") {
  nlohmann::json c = nlohmann::json::array();
  for (double v : radii.C) {
    if (std::isinf(v))
      c.push_back("inf");
    else
      c.push_back(v);
  }
  return {{"schema_version", 1}, {"method", method},       {"delta", radii.delta},
          {"delta_bar", radii.delta_bar}, {"n", radii.n}, {"p", radii.p},
          {"C", c}};
}

inline ConformalRadii radii_from_json(const nlohmann::json& j) {
  ConformalRadii radii;
  radii.delta = j.at("delta").get<double>();
  radii.delta_bar = j.at("delta_bar").get<double>();
  radii.n = j.at("n").get<int>();
  radii.p = j.at("p").get<int>();
  for (const auto& v : j.at("C")) {
    if (v.is_string())
      radii.C.push_back(std::numeric_limits<double>::infinity());
    else
      radii.C.push_back(v.get<double>());
  }
  return radii;
}

}  // namespace cpsf
