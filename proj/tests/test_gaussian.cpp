#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cpsf/gaussian.hpp"

using namespace cpsf;

namespace {

// High-precision quantile oracle: Newton refinement of the normal CDF
// expressed through erfc, independent of the rational approximation.
double quantile_oracle(double p) {
  double z = normal_quantile(p);  // starting point only; refined below
  for (int it = 0; it < 4; ++it) {
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    z -= (cdf - p) / pdf;
  }
  return z;
}

NonconformityTable table_from(const std::vector<std::vector<double>>& per_h) {
  NonconformityTable t;
  t.scores = per_h;
  t.n = static_cast<int>(per_h.front().size());
  return t;
}

}  // namespace

TEST_CASE("normal quantile matches the high-precision oracle") {
  for (double p : {0.001, 0.01, 0.025, 0.05, 0.2, 0.5, 0.8, 0.95, 0.975, 0.99, 0.999, 0.999875}) {
    REQUIRE(std::abs(normal_quantile(p) - quantile_oracle(p)) < 1e-6);
  }
  CHECK(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-9));
  CHECK(normal_quantile(0.99) == Catch::Approx(2.3263478740408408).margin(1e-6));
  CHECK_THROWS_AS(normal_quantile(0.0), InvalidInputError);
  CHECK_THROWS_AS(normal_quantile(1.0), InvalidInputError);
}

TEST_CASE("degenerate fit: equal scores give std zero and radius r") {
  std::vector<double> scores(20, 1.3);
  const GaussianRadii g = fit_gaussian_scores(table_from({scores}), 0.05);
  CHECK(g.mean[0] == Catch::Approx(1.3).margin(1e-12));
  CHECK(g.stddev[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(g.radii[0] == Catch::Approx(1.3).margin(1e-12));
}

TEST_CASE("median case: delta_bar 0.5 gives radius = mean") {
  const GaussianRadii g = fit_gaussian_scores(table_from({{1.0, 2.0, 3.0}}), 0.5);
  CHECK(g.z == Catch::Approx(0.0).margin(1e-9));
  CHECK(g.radii[0] == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("radius formula mean + z * std against the quantile oracle") {
  const GaussianRadii g = fit_gaussian_scores(table_from({{1.0, 2.0, 3.0}}), 0.01);
  // sample std of {1,2,3} with n-1 denominator is exactly 1
  CHECK(g.stddev[0] == Catch::Approx(1.0).margin(1e-12));
  const double z99 = quantile_oracle(0.99);
  CHECK(g.radii[0] == Catch::Approx(2.0 + z99).margin(1e-6));
}

TEST_CASE("gaussian radii are monotone non-increasing in delta_bar") {
  Rng rng(71);
  std::vector<double> scores(100);
  for (auto& s : scores) s = std::abs(rng.normal(1.0, 0.3));
  const auto table = table_from({scores});
  double prev = std::numeric_limits<double>::infinity();
  for (double db : {0.01, 0.05, 0.1, 0.25, 0.49}) {
    const GaussianRadii g = fit_gaussian_scores(table, db);
    CHECK(g.radii[0] <= prev + 1e-12);
    prev = g.radii[0];
  }
}

TEST_CASE("heavy tails: gaussian under-covers where conformal does not") {
  // mixture: 90% tight mode, 10% far mode; target level 1 - 0.05
  Rng rng(72);
  auto draw = [&]() {
    if (rng.uniform() < 0.10) return rng.normal(2.0, 0.1);
    return std::abs(rng.normal(0.2, 0.05));
  };

  std::vector<double> cal(500);
  for (auto& s : cal) s = draw();
  const double delta_bar = 0.05;
  const auto table = table_from({cal});
  const GaussianRadii gauss = fit_gaussian_scores(table, delta_bar);
  const ConformalRadii conf = calibrate_scores(table, delta_bar, nullptr);

  int g_cov = 0, c_cov = 0;
  const int n_test = 2000;
  for (int i = 0; i < n_test; ++i) {
    const double s = draw();
    if (s <= gauss.radii[0]) ++g_cov;
    if (s <= conf.C[0]) ++c_cov;
  }
  const double g_frac = static_cast<double>(g_cov) / n_test;
  const double c_frac = static_cast<double>(c_cov) / n_test;
  INFO("gaussian radius " << gauss.radii[0] << " coverage " << g_frac);
  INFO("conformal radius " << conf.C[0] << " coverage " << c_frac);
  CHECK(g_frac < 1.0 - delta_bar - 0.01);      // gaussian misses the target
  CHECK(c_frac >= 1.0 - delta_bar - 0.02);     // conformal holds it
}

TEST_CASE("gaussian radii JSON carries the method tag and round-trips") {
  const GaussianRadii g = fit_gaussian_scores(table_from({{0.5, 1.0, 1.5}, {1.0, 2.0, 3.0}}), 0.1);
  const auto j = gaussian_radii_to_json(g);
  CHECK(j.at("method") == "gaussian");
  const GaussianRadii back = gaussian_radii_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.radii.size() == 2);
  CHECK(back.radii[0] == g.radii[0]);
  CHECK(back.radii[1] == g.radii[1]);
  CHECK(back.mean[0] == g.mean[0]);
  CHECK(back.stddev[1] == g.stddev[1]);
  CHECK(back.z == g.z);
}
