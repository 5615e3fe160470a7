#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cpsf/conformal.hpp"

namespace cpsf {

// Inverse standard-normal CDF via Acklam's rational approximation
// (relative error below 1.2e-9 over (0, 1)).
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw InvalidInputError("normal_quantile: probability must be in (0, 1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  if (prob < p_low) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (prob <= p_high) {
    const double q = prob - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Gaussian error model per prediction step: radius_h = mean_h + z * std_h.
struct GaussianRadii {
  std::vector<double> mean;  // m
  std::vector<double> stddev;
  std::vector<double> radii;
  double z = 0.0;
  double delta_bar = 0.0;
  int n = 0;

  int horizon() const { return static_cast<int>(radii.size()); }

  // view as the shared radii container so the filter machinery is identical
  ConformalRadii as_radii() const {
    ConformalRadii r;
    r.C = radii;
    r.delta_bar = delta_bar;
    r.n = n;
    r.p = 0;
    return r;
  }
};

inline GaussianRadii fit_gaussian_scores(const NonconformityTable& table, double delta_bar) {
  if (table.n < 2) throw InvalidInputError("fit_gaussian_scores: need at least 2 scores");
  if (!(delta_bar > 0.0 && delta_bar < 1.0))
    throw InvalidInputError("fit_gaussian_scores: delta_bar must be in (0, 1)");

  GaussianRadii g;
  g.n = table.n;
  g.delta_bar = delta_bar;
  g.z = normal_quantile(1.0 - delta_bar);
  for (const auto& per_h : table.scores) {
    double mean = 0.0;
    for (double s : per_h) mean += s;
    mean /= per_h.size();
    double var = 0.0;
    for (double s : per_h) var += (s - mean) * (s - mean);
    var /= (per_h.size() - 1);  // sample variance
    const double stddev = std::sqrt(var);
    g.mean.push_back(mean);
    g.stddev.push_back(stddev);
    g.radii.push_back(mean + g.z * stddev);
  }
  return g;
}

// Same per-h score lists as the conformal calibration, but fit with a
// Gaussian error model instead of the distribution-free quantile.
inline GaussianRadii fit_gaussian(const PredictorModel& model,
                                  const std::vector<TrajectoryRecord>& calibration, int t_obs,
                                  double delta_bar, ScoreKind kind = ScoreKind::StackedNorm) {
  const NonconformityTable table = score_episodes(model, calibration, t_obs, kind);
  return fit_gaussian_scores(table, delta_bar);
}

inline nlohmann::json gaussian_radii_to_json(const GaussianRadii& g) {
  nlohmann::json j = radii_to_json(g.as_radii(), "gaussian");
  j["mean"] = g.mean;
  j["std"] = g.stddev;
  j["z"] = g.z;
  return j;
}

inline GaussianRadii gaussian_radii_from_json(const nlohmann::json& j) {
  if (j.at("method") != "gaussian")
    throw InvalidInputError("gaussian_radii_from_json: wrong method tag");
  GaussianRadii g;
  g.mean = j.at("mean").get<std::vector<double>>();
  g.stddev = j.at("std").get<std::vector<double>>();
  g.z = j.at("z").get<double>();
  g.delta_bar = j.at("delta_bar").get<double>();
  g.n = j.at("n").get<int>();
  for (const auto& v : j.at("C")) g.radii.push_back(v.get<double>());
  return g;
}

}  // namespace cpsf
