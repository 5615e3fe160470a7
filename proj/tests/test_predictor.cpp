#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cpsf/predictor.hpp"

using namespace cpsf;

namespace {

// Episodes of agents standing still at seeded positions.
std::vector<TrajectoryRecord> static_dataset(int episodes, int steps, int num_agents,
                                             std::uint64_t seed) {
  std::vector<TrajectoryRecord> out;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "static", e));
    TrajectoryRecord rec;
    rec.seed = e;
    rec.num_agents = num_agents;
    rec.dt = 0.1;
    AgentSnapshot snap;
    for (int j = 0; j < num_agents; ++j)
      snap.positions.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4)});
    rec.steps.assign(steps + 1, snap);
    out.push_back(std::move(rec));
  }
  return out;
}

// Constant-velocity motion with a small position jitter.
std::vector<TrajectoryRecord> constant_velocity_dataset(int episodes, int steps, int num_agents,
                                                        double noise, std::uint64_t seed) {
  std::vector<TrajectoryRecord> out;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "cv", e));
    TrajectoryRecord rec;
    rec.seed = e;
    rec.num_agents = num_agents;
    rec.dt = 0.1;
    std::vector<Vec2> p0(num_agents), v(num_agents);
    for (int j = 0; j < num_agents; ++j) {
      p0[j] = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
      v[j] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    }
    for (int t = 0; t <= steps; ++t) {
      AgentSnapshot snap;
      for (int j = 0; j < num_agents; ++j)
        snap.positions.push_back(p0[j] + v[j] * (0.1 * t) +
                                 Vec2{noise * rng.normal(), noise * rng.normal()});
      rec.steps.push_back(std::move(snap));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

double rmse(const std::vector<double>& errors) {
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s / errors.size());
}

}  // namespace

TEST_CASE("zero-initialized model predicts the normalization origin") {
  PredictorModel model;
  model.num_agents = 2;
  model.horizon = 3;
  model.history_window = 4;
  Rng rng(1);
  model.net = make_lstm(4, 6, 1, 12, rng);
  for (Tensor* t : tensor_list(model.net)) t->fill(0.0);

  std::vector<AgentSnapshot> history(5);
  for (auto& snap : history) snap.positions = {{1.0, 2.0}, {-3.0, 0.5}};
  const PredictionBundle bundle = predict(model, history);
  REQUIRE(bundle.horizon() == 3);
  for (const auto& snap : bundle.predicted)
    for (const Vec2& p : snap.positions) {
      REQUIRE(p.x == 0.0);
      REQUIRE(p.y == 0.0);
    }
}

TEST_CASE("predict is deterministic and finite") {
  PredictorModel model;
  model.num_agents = 2;
  model.horizon = 4;
  model.history_window = 6;
  Rng rng(2);
  model.net = make_lstm(4, 8, 2, 16, rng);

  Rng data_rng(3);
  std::vector<AgentSnapshot> history(9);
  for (auto& snap : history)
    snap.positions = {{data_rng.uniform(-5, 5), data_rng.uniform(-5, 5)},
                      {data_rng.uniform(-5, 5), data_rng.uniform(-5, 5)}};

  const PredictionBundle a = predict(model, history);
  const PredictionBundle b = predict(model, history);
  for (int h = 0; h < a.horizon(); ++h)
    for (std::size_t j = 0; j < a.predicted[h].size(); ++j) {
      REQUIRE(is_finite(a.predicted[h].positions[j]));
      REQUIRE(a.predicted[h].positions[j] == b.predicted[h].positions[j]);
    }
}

TEST_CASE("predict rejects agent-count mismatch") {
  PredictorModel model;
  model.num_agents = 3;
  model.horizon = 2;
  Rng rng(4);
  model.net = make_lstm(6, 4, 1, 12, rng);
  std::vector<AgentSnapshot> history(4);
  for (auto& snap : history) snap.positions = {{0, 0}, {1, 1}};  // only 2 agents
  CHECK_THROWS_AS(predict(model, history), ShapeError);
}

TEST_CASE("constant-velocity prediction of static agents stays put") {
  std::vector<AgentSnapshot> history(3);
  for (auto& snap : history) snap.positions = {{2.0, -1.0}};
  const PredictionBundle bundle = constant_velocity_predict(history, 4);
  for (const auto& snap : bundle.predicted) {
    CHECK(snap.positions[0].x == 2.0);
    CHECK(snap.positions[0].y == -1.0);
  }
}

TEST_CASE("constant-velocity prediction extrapolates linearly") {
  std::vector<AgentSnapshot> history(2);
  history[0].positions = {{0.0, 0.0}};
  history[1].positions = {{0.1, 0.0}};
  const PredictionBundle bundle = constant_velocity_predict(history, 5);
  for (int h = 1; h <= 5; ++h) {
    CHECK(bundle.predicted[h - 1].positions[0].x == Catch::Approx(0.1 * (1 + h)).margin(1e-12));
    CHECK(bundle.predicted[h - 1].positions[0].y == 0.0);
  }
}

TEST_CASE("constant-velocity oracle has zero error on exact straight lines") {
  const auto data = constant_velocity_dataset(3, 20, 2, 0.0, 5);
  for (const auto& episode : data) {
    const int cut = 10;
    std::vector<AgentSnapshot> history(episode.steps.begin(), episode.steps.begin() + cut + 1);
    const PredictionBundle bundle = constant_velocity_predict(history, 7);
    for (int h = 1; h <= 7; ++h)
      for (int j = 0; j < 2; ++j)
        REQUIRE(norm(bundle.predicted[h - 1].positions[j] -
                     episode.steps[cut + h].positions[j]) < 1e-9);
  }
}

TEST_CASE("training on static agents reaches sub-5cm validation RMSE") {
  const auto data = static_dataset(150, 16, 2, 11);
  PredictorTrainConfig cfg;
  cfg.hidden = 24;
  cfg.layers = 1;
  cfg.horizon = 7;
  cfg.history_window = 8;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.learning_rate = 5e-3;
  cfg.cut_stride = 1;
  cfg.seed = 21;
  const PredictorTrainResult result = train_predictor(data, cfg);
  REQUIRE_FALSE(result.diverged);
  for (int h = 0; h < cfg.horizon; ++h) {
    INFO("h = " << h + 1);
    REQUIRE(rmse(result.val_errors_per_h[h]) < 0.05);
  }
}

TEST_CASE("trained model is competitive with the constant-velocity oracle") {
  const double noise = 0.02;
  const auto data = constant_velocity_dataset(220, 18, 2, noise, 12);
  PredictorTrainConfig cfg;
  cfg.hidden = 32;
  cfg.layers = 1;
  cfg.horizon = 7;
  cfg.history_window = 8;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.cut_stride = 3;
  cfg.seed = 22;
  const PredictorTrainResult result = train_predictor(data, cfg);
  REQUIRE_FALSE(result.diverged);

  // constant-velocity oracle RMSE on the same validation episodes
  const int n_val = std::max(1, static_cast<int>(std::llround(data.size() * cfg.validation_fraction)));
  const int first_val = static_cast<int>(data.size()) - n_val;
  std::vector<std::vector<double>> cv_errors(7);
  for (int e = first_val; e < static_cast<int>(data.size()); ++e) {
    const auto& episode = data[e];
    const int last_cut = static_cast<int>(episode.steps.size()) - 1 - 7;
    for (int cut = cfg.history_window - 1; cut <= last_cut; cut += cfg.cut_stride) {
      std::vector<AgentSnapshot> history(episode.steps.begin(), episode.steps.begin() + cut + 1);
      const PredictionBundle bundle = constant_velocity_predict(history, 7);
      for (int h = 1; h <= 7; ++h) {
        double err = 0.0;
        for (int j = 0; j < 2; ++j)
          err += norm(bundle.predicted[h - 1].positions[j] - episode.steps[cut + h].positions[j]);
        cv_errors[h - 1].push_back(err / 2);
      }
    }
  }

  for (int h = 0; h < 7; ++h) {
    const double model_rmse = rmse(result.val_errors_per_h[h]);
    const double cv_rmse = rmse(cv_errors[h]);
    INFO("h = " << h + 1 << " model " << model_rmse << " cv " << cv_rmse);
    REQUIRE(model_rmse < 2.0 * cv_rmse);
  }

  // error grows with the prediction step in expectation
  double mean_h1 = 0.0, mean_h7 = 0.0;
  for (double e : result.val_errors_per_h[0]) mean_h1 += e;
  for (double e : result.val_errors_per_h[6]) mean_h7 += e;
  mean_h1 /= result.val_errors_per_h[0].size();
  mean_h7 /= result.val_errors_per_h[6].size();
  CHECK(mean_h7 >= mean_h1);
}

TEST_CASE("training with a fixed seed is bit-reproducible") {
  const auto data = static_dataset(30, 16, 2, 31);
  PredictorTrainConfig cfg;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.epochs = 3;
  cfg.cut_stride = 4;
  cfg.seed = 41;
  PredictorTrainResult a = train_predictor(data, cfg);
  PredictorTrainResult b = train_predictor(data, cfg);
  const auto fa = flatten_params(a.model.net);
  const auto fb = flatten_params(b.model.net);
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) REQUIRE(fa[i] == fb[i]);
}

TEST_CASE("predictor serialization round-trips") {
  Rng rng(51);
  PredictorModel model;
  model.num_agents = 3;
  model.horizon = 5;
  model.history_window = 8;
  model.position_scale = 6.0;
  model.net = make_lstm(6, 10, 2, 30, rng);
  PredictorModel back =
      predictor_from_json(nlohmann::json::parse(predictor_to_json(model).dump()));
  CHECK(back.num_agents == 3);
  CHECK(back.horizon == 5);
  const auto f1 = flatten_params(model.net);
  const auto f2 = flatten_params(back.net);
  for (std::size_t i = 0; i < f1.size(); ++i) REQUIRE(f1[i] == f2[i]);
}
