#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cpsf/agents.hpp"
#include "cpsf/learncore.hpp"
#include "cpsf/world.hpp"

namespace cpsf {

// H-step-ahead stacked position predictions issued at step t.
struct PredictionBundle {
  std::vector<AgentSnapshot> predicted;  // horizon snapshots, t+1 .. t+H
  int issued_at = 0;

  int horizon() const { return static_cast<int>(predicted.size()); }
};

struct PredictorModel {
  LstmParams net;
  int num_agents = 0;
  int horizon = 7;
  int history_window = 8;      // recurrent unroll length
  double position_scale = 6.0; // workspace half-width used for normalization

  std::size_t input_dim() const { return static_cast<std::size_t>(2 * num_agents); }
  std::size_t output_dim() const { return static_cast<std::size_t>(2 * num_agents * horizon); }
};

namespace detail {

// History, truncated or front-padded to the fixed window, as normalized
// per-step LSTM inputs.
inline std::vector<std::vector<double>> history_to_sequence(
    const std::vector<AgentSnapshot>& history, int window, int num_agents, double scale) {
  std::vector<std::vector<double>> seq(static_cast<std::size_t>(window));
  const int n = static_cast<int>(history.size());
  for (int k = 0; k < window; ++k) {
    const int idx = std::max(0, n - window + k);  // replicate earliest snapshot when short
    const AgentSnapshot& snap = history[idx];
    std::vector<double> step(static_cast<std::size_t>(2 * num_agents));
    for (int j = 0; j < num_agents; ++j) {
      step[2 * j] = snap.positions[j].x / scale;
      step[2 * j + 1] = snap.positions[j].y / scale;
    }
    seq[k] = std::move(step);
  }
  return seq;
}

inline PredictionBundle output_to_bundle(const std::vector<double>& out, int num_agents,
                                         int horizon, double scale, int issued_at) {
  PredictionBundle bundle;
  bundle.issued_at = issued_at;
  bundle.predicted.resize(horizon);
  for (int h = 0; h < horizon; ++h) {
    AgentSnapshot snap;
    snap.positions.resize(num_agents);
    for (int j = 0; j < num_agents; ++j) {
      snap.positions[j].x = out[(h * num_agents + j) * 2] * scale;
      snap.positions[j].y = out[(h * num_agents + j) * 2 + 1] * scale;
    }
    bundle.predicted[h] = std::move(snap);
  }
  return bundle;
}

}  // namespace detail

inline PredictionBundle predict(const PredictorModel& model,
                                const std::vector<AgentSnapshot>& history) {
  if (history.size() < 2) throw ShapeError("predict: need at least 2 history snapshots");
  if (static_cast<int>(history.back().size()) != model.num_agents)
    throw ShapeError("predict: history has " + std::to_string(history.back().size()) +
                     " agents, model expects " + std::to_string(model.num_agents));
  const auto seq = detail::history_to_sequence(history, model.history_window, model.num_agents,
                                               model.position_scale);
  const auto out = lstm_forward(model.net, seq);
  return detail::output_to_bundle(out, model.num_agents, model.horizon, model.position_scale,
                                  static_cast<int>(history.size()) - 1);
}

// Linear extrapolation at each agent's last observed per-step displacement.
inline PredictionBundle constant_velocity_predict(const std::vector<AgentSnapshot>& history,
                                                  int horizon) {
  if (history.size() < 2) throw ShapeError("constant_velocity_predict: need >= 2 snapshots");
  const AgentSnapshot& last = history.back();
  const AgentSnapshot& prev = history[history.size() - 2];
  if (last.size() != prev.size())
    throw ShapeError("constant_velocity_predict: inconsistent agent counts");

  PredictionBundle bundle;
  bundle.issued_at = static_cast<int>(history.size()) - 1;
  bundle.predicted.resize(horizon);
  for (int h = 0; h < horizon; ++h) {
    AgentSnapshot snap;
    snap.positions.resize(last.size());
    for (std::size_t j = 0; j < last.size(); ++j) {
      const Vec2 step_disp = last.positions[j] - prev.positions[j];
      snap.positions[j] = last.positions[j] + step_disp * static_cast<double>(h + 1);
    }
    bundle.predicted[h] = std::move(snap);
  }
  return bundle;
}

struct PredictorTrainConfig {
  int hidden = 128;
  int layers = 2;
  int horizon = 7;
  int history_window = 8;
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  int cut_stride = 1;  // train on every cut_stride-th valid cut per episode
  double position_scale = 6.0;
  std::uint64_t seed = 0;

  static PredictorTrainConfig from_config(const Config& cfg) {
    PredictorTrainConfig c;
    c.hidden = static_cast<int>(cfg.get_int("predictor.hidden", c.hidden));
    c.layers = static_cast<int>(cfg.get_int("predictor.layers", c.layers));
    c.horizon = static_cast<int>(cfg.get_int("predictor.horizon", c.horizon));
    c.history_window = static_cast<int>(cfg.get_int("predictor.history_window", c.history_window));
    c.epochs = static_cast<int>(cfg.get_int("predictor.epochs", c.epochs));
    c.batch_size = static_cast<int>(cfg.get_int("predictor.batch_size", c.batch_size));
    c.learning_rate = cfg.get_double("predictor.learning_rate", c.learning_rate);
    c.validation_fraction = cfg.get_double("predictor.validation_fraction", c.validation_fraction);
    c.cut_stride = static_cast<int>(cfg.get_int("predictor.cut_stride", c.cut_stride));
    c.position_scale = cfg.get_double("world.workspace_half_width", c.position_scale);
    return c;
  }
};

struct PredictorTrainResult {
  PredictorModel model;
  std::vector<double> train_loss_curve;  // per epoch, normalized squared error
  std::vector<double> val_loss_curve;
  std::vector<std::vector<double>> val_errors_per_h;  // [h][example] mean-per-agent error, meters
  int best_epoch = -1;
  bool diverged = false;
};

namespace detail {

struct PredictorExample {
  int episode = 0;
  int cut = 0;  // last observed step index
};

inline std::vector<double> target_vector(const TrajectoryRecord& episode, int cut, int horizon,
                                         int num_agents, double scale) {
  std::vector<double> target(static_cast<std::size_t>(2 * num_agents * horizon));
  for (int h = 1; h <= horizon; ++h) {
    const AgentSnapshot& snap = episode.steps[cut + h];
    for (int j = 0; j < num_agents; ++j) {
      target[((h - 1) * num_agents + j) * 2] = snap.positions[j].x / scale;
      target[((h - 1) * num_agents + j) * 2 + 1] = snap.positions[j].y / scale;
    }
  }
  return target;
}

}  // namespace detail

// Minimizes the mean squared multi-horizon prediction error over all valid
// cuts of the training episodes; returns the best-validation checkpoint.
inline PredictorTrainResult train_predictor(const std::vector<TrajectoryRecord>& dataset,
                                            const PredictorTrainConfig& cfg) {
  if (dataset.empty()) throw InvalidInputError("train_predictor: empty dataset");
  const int num_agents = dataset.front().num_agents;
  const int min_steps = cfg.history_window + cfg.horizon;
  for (const auto& ep : dataset)
    if (static_cast<int>(ep.steps.size()) < min_steps + 1)
      throw InvalidInputError("train_predictor: episode shorter than history + horizon");

  PredictorTrainResult result;
  Rng rng(derive_seed(cfg.seed, "train_predictor"));
  result.model.net = make_lstm(static_cast<std::size_t>(2 * num_agents),
                               static_cast<std::size_t>(cfg.hidden),
                               static_cast<std::size_t>(cfg.layers),
                               static_cast<std::size_t>(2 * num_agents * cfg.horizon), rng);
  result.model.num_agents = num_agents;
  result.model.horizon = cfg.horizon;
  result.model.history_window = cfg.history_window;
  result.model.position_scale = cfg.position_scale;

  const int n_val = std::max(1, static_cast<int>(std::llround(dataset.size() * cfg.validation_fraction)));
  const int n_train = static_cast<int>(dataset.size()) - n_val;
  if (n_train < 1) throw InvalidInputError("train_predictor: dataset too small for validation split");

  auto collect_examples = [&](int begin, int end) {
    std::vector<detail::PredictorExample> ex;
    for (int e = begin; e < end; ++e) {
      const int last_cut = static_cast<int>(dataset[e].steps.size()) - 1 - cfg.horizon;
      for (int cut = cfg.history_window - 1; cut <= last_cut; cut += cfg.cut_stride)
        ex.push_back({e, cut});
    }
    return ex;
  };
  std::vector<detail::PredictorExample> train_examples = collect_examples(0, n_train);
  const std::vector<detail::PredictorExample> val_examples =
      collect_examples(n_train, static_cast<int>(dataset.size()));

  LstmGrads grads = make_lstm_grads(result.model.net);
  AdamState opt;
  opt.lr = cfg.learning_rate;

  auto example_forward = [&](const detail::PredictorExample& ex, LstmCache* cache,
                             std::vector<double>* out) {
    const auto& episode = dataset[ex.episode];
    std::vector<AgentSnapshot> history(episode.steps.begin(),
                                       episode.steps.begin() + ex.cut + 1);
    const auto seq = detail::history_to_sequence(history, cfg.history_window, num_agents,
                                                 cfg.position_scale);
    *out = lstm_forward(result.model.net, seq, cache);
  };

  auto validation_loss = [&]() {
    double total = 0.0;
    std::vector<double> out;
    for (const auto& ex : val_examples) {
      example_forward(ex, nullptr, &out);
      const auto target = detail::target_vector(dataset[ex.episode], ex.cut, cfg.horizon,
                                                num_agents, cfg.position_scale);
      for (std::size_t i = 0; i < out.size(); ++i)
        total += (out[i] - target[i]) * (out[i] - target[i]);
    }
    return val_examples.empty() ? 0.0 : total / static_cast<double>(val_examples.size());
  };

  LstmParams best = result.model.net;
  double best_val = std::numeric_limits<double>::infinity();
  Rng shuffle_rng(derive_seed(cfg.seed, "train_predictor_shuffle"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the deterministic stream
    for (std::size_t i = train_examples.size(); i > 1; --i)
      std::swap(train_examples[i - 1], train_examples[shuffle_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    std::vector<double> out;
    while (batch_start < train_examples.size()) {
      const std::size_t batch_end =
          std::min(batch_start + static_cast<std::size_t>(cfg.batch_size), train_examples.size());
      const double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);
      zero_grads(grads);
      double batch_loss = 0.0;
      for (std::size_t i = batch_start; i < batch_end; ++i) {
        LstmCache cache;
        example_forward(train_examples[i], &cache, &out);
        const auto target = detail::target_vector(dataset[train_examples[i].episode],
                                                  train_examples[i].cut, cfg.horizon, num_agents,
                                                  cfg.position_scale);
        std::vector<double> d_out(out.size());
        for (std::size_t k = 0; k < out.size(); ++k) {
          const double diff = out[k] - target[k];
          batch_loss += diff * diff;
          d_out[k] = 2.0 * diff * inv_batch;
        }
        lstm_backward(result.model.net, cache, d_out, grads);
      }
      batch_loss *= inv_batch;
      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        break;
      }
      epoch_loss += batch_loss * static_cast<double>(batch_end - batch_start);
      adam_step(result.model.net, grads, opt);
      batch_start = batch_end;
    }
    if (result.diverged) break;

    result.train_loss_curve.push_back(epoch_loss / static_cast<double>(train_examples.size()));
    const double val = validation_loss();
    result.val_loss_curve.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = result.model.net;
      result.best_epoch = epoch;
    }
  }

  result.model.net = best;

  // per-h validation error statistics in meters (mean per-agent error)
  result.val_errors_per_h.assign(static_cast<std::size_t>(cfg.horizon), {});
  std::vector<double> out;
  for (const auto& ex : val_examples) {
    example_forward(ex, nullptr, &out);
    const auto& episode = dataset[ex.episode];
    for (int h = 1; h <= cfg.horizon; ++h) {
      double err = 0.0;
      for (int j = 0; j < num_agents; ++j) {
        const Vec2 pred{out[((h - 1) * num_agents + j) * 2] * cfg.position_scale,
                        out[((h - 1) * num_agents + j) * 2 + 1] * cfg.position_scale};
        err += norm(pred - episode.steps[ex.cut + h].positions[j]);
      }
      result.val_errors_per_h[h - 1].push_back(err / num_agents);
    }
  }
  return result;
}

inline nlohmann::json predictor_to_json(const PredictorModel& model) {
  return {{"format_version", 1},
          {"kind", "predictor"},
          {"num_agents", model.num_agents},
          {"horizon", model.horizon},
          {"history_window", model.history_window},
          {"position_scale", model.position_scale},
          {"net", lstm_to_json(model.net)}};
}

inline PredictorModel predictor_from_json(const nlohmann::json& j) {
  if (j.at("kind") != "predictor") throw ShapeError("predictor_from_json: wrong container kind");
  PredictorModel model;
  model.num_agents = j.at("num_agents").get<int>();
  model.horizon = j.at("horizon").get<int>();
  model.history_window = j.at("history_window").get<int>();
  model.position_scale = j.at("position_scale").get<double>();
  model.net = lstm_from_json(j.at("net"));
  return model;
}

}  // namespace cpsf
