#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cpsf/conformal.hpp"
#include "cpsf/predictor.hpp"

namespace cpsf {

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One row of the filter training set: everything the filter sees at a single
// decision point, plus the nominal rollout it should imitate.
struct FilterTrainingRecord {
  SystemState state;                        // x_t
  AgentSnapshot current_agents;             // tau_t (canonical agent order source)
  std::vector<AgentSnapshot> predictions;   // tau_bar_{t+1..t+H}
  std::vector<ControlInput> nominal_inputs; // u_bar_{t..t+H-1}
  std::vector<SystemState> nominal_states;  // x_bar_{t+1..t+H}
  std::vector<double> radii;                // C_{t+1..t+H}
  std::uint64_t episode_seed = 0;
  int cut = 0;
};

struct FilterModel {
  MlpParams net;
  int num_agents = 0;
  int horizon = 7;
  VehicleLimits limits;
  double position_scale = 6.0;
  std::string nominal_policy;  // which policy the filter imitates

  // [ tau_bar 2mH | u_bar 2H | x_bar 4H | C H ], ego frame
  std::size_t input_dim() const {
    return static_cast<std::size_t>(2 * num_agents * horizon + 2 * horizon + 4 * horizon + horizon);
  }
  std::size_t output_dim() const { return static_cast<std::size_t>(2 * horizon); }
};

// ---------------------------------------------------------------------------
// Nominal rollout: forward simulation under the unfiltered policy, driven by
// the true snapshot at t and the predicted snapshots afterwards.
// ---------------------------------------------------------------------------

struct NominalRollout {
  std::vector<SystemState> states;   // x_bar_{t+1..t+H}
  std::vector<ControlInput> inputs;  // u_bar_{t..t+H-1}
};

inline NominalRollout nominal_rollout(const SystemState& state,
                                      const std::vector<AgentSnapshot>& history,
                                      const PredictionBundle& predictions,
                                      const SystemController& policy, double dt,
                                      const VehicleLimits& limits) {
  const int horizon = predictions.horizon();
  NominalRollout out;
  out.states.reserve(horizon);
  out.inputs.reserve(horizon);

  std::vector<AgentSnapshot> rolled_history = history;
  SystemState current = state;
  for (int h = 0; h < horizon; ++h) {
    if (h > 0) rolled_history.push_back(predictions.predicted[h - 1]);
    const ControlInput raw = policy(current, rolled_history);
    if (!std::isfinite(raw.accel) || !std::isfinite(raw.steer))
      throw InvalidInputError("nominal_rollout: policy returned non-finite input at step " +
                              std::to_string(h));
    const ControlInput input = clamp_input(raw, limits);
    current = step_dynamics(current, input, dt, limits);
    out.inputs.push_back(input);
    out.states.push_back(current);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filter input encoding: ego frame, agents sorted by current distance.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> agent_order_by_distance(const AgentSnapshot& current, const Vec2& ego) {
  std::vector<int> order(current.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return norm_sq(current.positions[a] - ego) < norm_sq(current.positions[b] - ego);
  });
  return order;
}

}  // namespace detail

inline std::vector<double> encode_filter_input(const FilterModel& model, const SystemState& state,
                                               const AgentSnapshot& current_agents,
                                               const std::vector<AgentSnapshot>& predictions,
                                               const std::vector<ControlInput>& nominal_inputs,
                                               const std::vector<SystemState>& nominal_states,
                                               const std::vector<double>& radii) {
  const int H = model.horizon;
  const int m = model.num_agents;
  if (static_cast<int>(predictions.size()) != H || static_cast<int>(nominal_inputs.size()) != H ||
      static_cast<int>(nominal_states.size()) != H || static_cast<int>(radii.size()) != H)
    throw ShapeError("encode_filter_input: horizon mismatch");
  const Vec2 ego = state.position();
  const double scale = model.position_scale;
  const auto order = detail::agent_order_by_distance(current_agents, ego);

  std::vector<double> input;
  input.reserve(model.input_dim());
  for (int h = 0; h < H; ++h) {
    for (int k = 0; k < m; ++k) {
      const Vec2 rel = rotate(predictions[h].positions[order[k]] - ego, -state.heading);
      input.push_back(rel.x / scale);
      input.push_back(rel.y / scale);
    }
  }
  for (int h = 0; h < H; ++h) {
    input.push_back(nominal_inputs[h].accel / model.limits.a_max);
    input.push_back(nominal_inputs[h].steer / model.limits.steer_max);
  }
  for (int h = 0; h < H; ++h) {
    const Vec2 rel = rotate(nominal_states[h].position() - ego, -state.heading);
    input.push_back(rel.x / scale);
    input.push_back(rel.y / scale);
    input.push_back(wrap_angle(nominal_states[h].heading - state.heading) / std::numbers::pi);
    input.push_back(nominal_states[h].speed / model.limits.v_max);
  }
  for (int h = 0; h < H; ++h) input.push_back(radii[h] / scale);
  return input;
}

// Raw network outputs squashed into the admissible input set.
inline std::vector<ControlInput> decode_filter_output(const FilterModel& model,
                                                      const std::vector<double>& raw) {
  std::vector<ControlInput> inputs(model.horizon);
  for (int h = 0; h < model.horizon; ++h) {
    inputs[h].accel = model.limits.a_max * std::tanh(raw[2 * h]);
    inputs[h].steer = model.limits.steer_max * std::tanh(raw[2 * h + 1]);
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// The penalty-relaxed training objective and its gradient through the rollout.
// ---------------------------------------------------------------------------

struct FilterLossParts {
  double imitation = 0.0;
  double hinge = 0.0;       // sum of squared constraint violations
  int active_hinges = 0;    // count of violated (h, agent) constraints
  double min_clearance = std::numeric_limits<double>::infinity();

  double total(double penalty_weight) const { return imitation + penalty_weight * hinge; }
};

namespace detail {

inline std::array<double, 4> state_to_array(const SystemState& s) {
  return {s.pos_x, s.pos_y, s.heading, s.speed};
}

}  // namespace detail

// Rolls the candidate inputs forward from the record's state and evaluates
// the imitation term plus the hinge penalty on clearance from each predicted
// agent. When d_inputs is non-null the exact gradient with respect to the
// 2H input entries (accel, steer per step) is written there.
inline FilterLossParts filter_loss(const FilterTrainingRecord& record,
                                   const std::vector<ControlInput>& inputs, double penalty_weight,
                                   double safety_margin, double dt, const VehicleLimits& limits,
                                   std::vector<double>* d_inputs = nullptr) {
  const int H = static_cast<int>(record.predictions.size());
  if (static_cast<int>(inputs.size()) != H) throw ShapeError("filter_loss: horizon mismatch");

  FilterLossParts parts;
  std::vector<SystemState> states(H);
  SystemState current = record.state;
  for (int h = 0; h < H; ++h) {
    current = step_dynamics(current, inputs[h], dt, limits);
    states[h] = current;
  }

  // d loss / d state at each rolled-out step
  std::vector<std::array<double, 4>> d_state(H, {0, 0, 0, 0});
  for (int h = 0; h < H; ++h) {
    const SystemState& rolled = states[h];
    const SystemState& nominal = record.nominal_states[h];
    const double dx = rolled.pos_x - nominal.pos_x;
    const double dy = rolled.pos_y - nominal.pos_y;
    const double dth = wrap_angle(rolled.heading - nominal.heading);
    const double dv = rolled.speed - nominal.speed;
    parts.imitation += dx * dx + dy * dy + dth * dth + dv * dv;
    d_state[h][0] += 2.0 * dx;
    d_state[h][1] += 2.0 * dy;
    d_state[h][2] += 2.0 * dth;
    d_state[h][3] += 2.0 * dv;

    const double required = record.radii[h] + safety_margin;
    for (const Vec2& agent : record.predictions[h].positions) {
      const Vec2 diff{rolled.pos_x - agent.x, rolled.pos_y - agent.y};
      const double dist = norm(diff);
      parts.min_clearance = std::min(parts.min_clearance, dist - record.radii[h]);
      const double violation = required - dist;
      if (violation > 0.0) {
        parts.hinge += violation * violation;
        ++parts.active_hinges;
        if (dist > 1e-12) {
          const double coeff = -2.0 * penalty_weight * violation / dist;
          d_state[h][0] += coeff * diff.x;
          d_state[h][1] += coeff * diff.y;
        }
      }
    }
  }

  if (d_inputs) {
    d_inputs->assign(2 * H, 0.0);
    std::array<double, 4> carry = {0, 0, 0, 0};
    for (int h = H - 1; h >= 0; --h) {
      for (int k = 0; k < 4; ++k) carry[k] += d_state[h][k];
      const SystemState& from = h == 0 ? record.state : states[h - 1];
      const DynamicsJacobian jac = step_dynamics_jacobian(from, inputs[h], dt, limits);
      for (int col = 0; col < 2; ++col) {
        double acc = 0.0;
        for (int row = 0; row < 4; ++row) acc += carry[row] * jac.d_input[row][col];
        (*d_inputs)[2 * h + col] = acc;
      }
      std::array<double, 4> prev = {0, 0, 0, 0};
      for (int col = 0; col < 4; ++col) {
        double acc = 0.0;
        for (int row = 0; row < 4; ++row) acc += carry[row] * jac.d_state[row][col];
        prev[col] = acc;
      }
      carry = prev;
    }
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Training-set construction (one record per episode cut, warm-up under the
// nominal policy against the recorded true snapshots).
// ---------------------------------------------------------------------------

// Builds the goal-bound nominal controller for a scenario.
using PolicyFactory = std::function<SystemController(const Scenario&, const ScenarioConfig&)>;

struct SftrainConfig {
  int t_obs = 8;
  int cuts_per_episode = 1;
  int cut_stride = 4;  // spacing between extra cuts

  // Optional augmentation: extra records with the ego state jittered around
  // the warm-up state. The nominal rollout is recomputed from the jittered
  // state, so the imitation target stays exact; this widens the state
  // distribution the filter sees beyond the unfiltered policy's own paths.
  int jitter_copies = 0;
  double jitter_pos = 0.3;      // m
  double jitter_heading = 0.25; // rad
  double jitter_speed = 0.3;    // m/s
  std::uint64_t jitter_seed = 0;
};

inline std::vector<FilterTrainingRecord> build_sftrain(
    const std::vector<TrajectoryRecord>& episodes, const PredictorModel& predictor_model,
    const PolicyFactory& policy_factory, const ConformalRadii& radii,
    const ScenarioConfig& config, const SftrainConfig& sft = {}) {
  if (radii.any_infinite())
    throw MissingArtifactError(
        "build_sftrain: conformal radii are infinite; recalibrate with a larger calibration set "
        "(see the calibration warning for the minimum size)");
  if (radii.horizon() != predictor_model.horizon)
    throw InvalidInputError("build_sftrain: radii horizon does not match the predictor");

  std::vector<FilterTrainingRecord> records;
  records.reserve(episodes.size() * sft.cuts_per_episode * (1 + sft.jitter_copies));
  const int H = predictor_model.horizon;

  for (const auto& episode : episodes) {
    const Scenario scenario = sample_scenario(config, episode.seed);
    const SystemController policy = policy_factory(scenario, config);

    SystemState state;
    state.pos_x = scenario.system_start.x;
    state.pos_y = scenario.system_start.y;
    const Vec2 to_goal = scenario.system_goal - scenario.system_start;
    state.heading = std::atan2(to_goal.y, to_goal.x);

    Rng jitter_rng(derive_seed(sft.jitter_seed, "sftrain_jitter", episode.seed));
    int warmed_to = 0;
    std::vector<AgentSnapshot> history;
    for (int c = 0; c < sft.cuts_per_episode; ++c) {
      const int cut = sft.t_obs + c * sft.cut_stride;
      if (cut + H >= static_cast<int>(episode.steps.size())) break;

      // advance the ego under the nominal policy against the true snapshots
      for (; warmed_to < cut; ++warmed_to) {
        history.assign(episode.steps.begin(), episode.steps.begin() + warmed_to + 1);
        const ControlInput u = clamp_input(policy(state, history), config.limits);
        state = step_dynamics(state, u, config.dt, config.limits);
      }

      history.assign(episode.steps.begin(), episode.steps.begin() + cut + 1);
      const PredictionBundle bundle = predict(predictor_model, history);

      for (int copy = 0; copy <= sft.jitter_copies; ++copy) {
        SystemState record_state = state;
        if (copy > 0) {
          record_state.pos_x += jitter_rng.uniform(-sft.jitter_pos, sft.jitter_pos);
          record_state.pos_y += jitter_rng.uniform(-sft.jitter_pos, sft.jitter_pos);
          record_state.heading = wrap_angle(
              record_state.heading + jitter_rng.uniform(-sft.jitter_heading, sft.jitter_heading));
          record_state.speed = std::clamp(
              record_state.speed + jitter_rng.uniform(-sft.jitter_speed, sft.jitter_speed), 0.0,
              config.limits.v_max);
        }
        const NominalRollout rollout =
            nominal_rollout(record_state, history, bundle, policy, config.dt, config.limits);

        FilterTrainingRecord rec;
        rec.state = record_state;
        rec.current_agents = episode.steps[cut];
        rec.predictions = bundle.predicted;
        rec.nominal_inputs = rollout.inputs;
        rec.nominal_states = rollout.states;
        rec.radii = radii.C;
        rec.episode_seed = episode.seed;
        rec.cut = cut;
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct FilterTrainConfig {
  int hidden = 128;
  int layers = 3;
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  double penalty_weight = 10.0;   // starting lambda
  int penalty_double_every = 10;  // epochs between doublings while infeasible
  double penalty_max = 1e5;
  double target_violation_rate = 0.01;
  double safety_margin = 1.0;     // epsilon: r_sys + r_agent
  std::uint64_t seed = 0;

  static FilterTrainConfig from_config(const Config& cfg, const ScenarioConfig& world) {
    FilterTrainConfig c;
    c.hidden = static_cast<int>(cfg.get_int("filter.hidden", c.hidden));
    c.layers = static_cast<int>(cfg.get_int("filter.layers", c.layers));
    c.epochs = static_cast<int>(cfg.get_int("filter.epochs", c.epochs));
    c.batch_size = static_cast<int>(cfg.get_int("filter.batch_size", c.batch_size));
    c.learning_rate = cfg.get_double("filter.learning_rate", c.learning_rate);
    c.validation_fraction = cfg.get_double("filter.validation_fraction", c.validation_fraction);
    c.penalty_weight = cfg.get_double("filter.penalty_weight", c.penalty_weight);
    c.penalty_double_every =
        static_cast<int>(cfg.get_int("filter.penalty_double_every", c.penalty_double_every));
    c.penalty_max = cfg.get_double("filter.penalty_max", c.penalty_max);
    c.target_violation_rate =
        cfg.get_double("filter.target_violation_rate", c.target_violation_rate);
    c.safety_margin = cfg.get_double("filter.safety_margin", 0.0);
    if (c.safety_margin <= 0.0) c.safety_margin = world.system_radius + world.agent_radius;
    return c;
  }
};

struct FilterTrainResult {
  FilterModel model;
  std::vector<double> train_loss_curve;
  std::vector<double> val_imitation_curve;
  std::vector<double> val_violation_rate_curve;
  double final_violation_rate = 0.0;
  double final_penalty_weight = 0.0;
  int best_epoch = -1;
  bool diverged = false;
};

inline FilterTrainResult train_filter(const std::vector<FilterTrainingRecord>& records,
                                      const ScenarioConfig& world, const FilterTrainConfig& cfg,
                                      const std::string& nominal_policy_tag = "") {
  if (records.empty()) throw InvalidInputError("train_filter: empty dataset");
  const int H = static_cast<int>(records.front().predictions.size());
  const int m = static_cast<int>(records.front().current_agents.size());

  FilterTrainResult result;
  result.model.num_agents = m;
  result.model.horizon = H;
  result.model.limits = world.limits;
  result.model.position_scale = world.workspace_half_width;
  result.model.nominal_policy = nominal_policy_tag;

  Rng rng(derive_seed(cfg.seed, "train_filter"));
  std::vector<std::size_t> dims;
  dims.push_back(result.model.input_dim());
  for (int l = 0; l < cfg.layers; ++l) dims.push_back(static_cast<std::size_t>(cfg.hidden));
  dims.push_back(result.model.output_dim());
  result.model.net = make_mlp(dims, rng);

  const int n_val = std::max(1, static_cast<int>(std::llround(records.size() * cfg.validation_fraction)));
  const int n_train = static_cast<int>(records.size()) - n_val;
  if (n_train < 1) throw InvalidInputError("train_filter: dataset too small for validation split");

  // precompute inputs; they do not depend on the trainable parameters
  std::vector<std::vector<double>> encoded(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    encoded[i] = encode_filter_input(result.model, records[i].state, records[i].current_agents,
                                     records[i].predictions, records[i].nominal_inputs,
                                     records[i].nominal_states, records[i].radii);

  MlpGrads grads = make_mlp_grads(result.model.net);
  AdamState opt;
  opt.lr = cfg.learning_rate;
  double penalty = cfg.penalty_weight;

  auto evaluate_example = [&](std::size_t idx, double lambda, std::vector<double>* d_raw)
      -> FilterLossParts {
    MlpCache cache;
    const auto raw = mlp_forward(result.model.net, encoded[idx], d_raw ? &cache : nullptr);
    const auto inputs = decode_filter_output(result.model, raw);
    std::vector<double> d_u;
    const FilterLossParts parts = filter_loss(records[idx], inputs, lambda, cfg.safety_margin,
                                              world.dt, world.limits, d_raw ? &d_u : nullptr);
    if (d_raw) {
      // through the tanh squashing
      std::vector<double> d_raw_out(raw.size());
      for (int h = 0; h < H; ++h) {
        const double ta = std::tanh(raw[2 * h]);
        const double ts = std::tanh(raw[2 * h + 1]);
        d_raw_out[2 * h] = d_u[2 * h] * result.model.limits.a_max * (1.0 - ta * ta);
        d_raw_out[2 * h + 1] = d_u[2 * h + 1] * result.model.limits.steer_max * (1.0 - ts * ts);
      }
      *d_raw = d_raw_out;
      // caller adds the parameter gradient contribution
      mlp_backward(result.model.net, cache, *d_raw, grads);
    }
    return parts;
  };

  auto validation_stats = [&](double lambda) {
    double imitation = 0.0;
    int active = 0;
    long total_constraints = 0;
    double total = 0.0;
    for (int i = n_train; i < static_cast<int>(records.size()); ++i) {
      const FilterLossParts parts = evaluate_example(static_cast<std::size_t>(i), lambda, nullptr);
      imitation += parts.imitation;
      active += parts.active_hinges;
      total_constraints += static_cast<long>(H) * m;
      total += parts.total(lambda);
    }
    struct Stats {
      double imitation, violation_rate, total;
    };
    return Stats{imitation / n_val,
                 total_constraints ? static_cast<double>(active) / total_constraints : 0.0,
                 total / n_val};
  };

  std::vector<std::size_t> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, "train_filter_shuffle"));

  MlpParams best = result.model.net;
  double best_score = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    while (batch_start < order.size()) {
      const std::size_t batch_end =
          std::min(batch_start + static_cast<std::size_t>(cfg.batch_size), order.size());
      const double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);
      zero_grads(grads);
      double batch_loss = 0.0;
      for (std::size_t i = batch_start; i < batch_end; ++i) {
        std::vector<double> d_raw;
        const FilterLossParts parts = evaluate_example(order[i], penalty, &d_raw);
        batch_loss += parts.total(penalty);
      }
      // scale the accumulated gradient to the batch mean
      for (Tensor* t : tensor_list(grads))
        for (double& v : t->data) v *= inv_batch;
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
    result.train_loss_curve.push_back(epoch_loss / static_cast<double>(n_train));

    const auto stats = validation_stats(penalty);
    result.val_imitation_curve.push_back(stats.imitation);
    result.val_violation_rate_curve.push_back(stats.violation_rate);

    // checkpoint selection scores the imitation/penalty tradeoff at the
    // starting weight so epochs trained under different lambdas compare
    const auto ref_stats = penalty == cfg.penalty_weight ? stats : validation_stats(cfg.penalty_weight);
    if (ref_stats.total < best_score) {
      best_score = ref_stats.total;
      best = result.model.net;
      result.best_epoch = epoch;
    }

    if ((epoch + 1) % cfg.penalty_double_every == 0 &&
        stats.violation_rate > cfg.target_violation_rate && penalty < cfg.penalty_max)
      penalty = std::min(penalty * 2.0, cfg.penalty_max);
  }

  result.model.net = best;
  result.final_penalty_weight = penalty;
  const auto final_stats = validation_stats(penalty);
  result.final_violation_rate = final_stats.violation_rate;
  return result;
}

// ---------------------------------------------------------------------------
// Online execution (receding horizon, first input applied).
// ---------------------------------------------------------------------------

inline ControlInput filtered_step(const SystemState& state,
                                  const std::vector<AgentSnapshot>& history,
                                  const PredictorModel& predictor_model,
                                  const SystemController& nominal_policy,
                                  const FilterModel& filter_model, const ConformalRadii& radii,
                                  double dt) {
  const PredictionBundle bundle = predict(predictor_model, history);
  const NominalRollout rollout =
      nominal_rollout(state, history, bundle, nominal_policy, dt, filter_model.limits);
  const auto input = encode_filter_input(filter_model, state, history.back(), bundle.predicted,
                                         rollout.inputs, rollout.states, radii.C);
  const auto raw = mlp_forward(filter_model.net, input);
  const auto inputs = decode_filter_output(filter_model, raw);
  return clamp_input(inputs.front(), filter_model.limits);
}

// Wraps the filter as a system controller with a warm-up phase: before t_obs
// snapshots have been observed the nominal policy runs unfiltered.
inline SystemController make_filtered_controller(const PredictorModel& predictor_model,
                                                 const SystemController& nominal_policy,
                                                 const FilterModel& filter_model,
                                                 const ConformalRadii& radii, double dt,
                                                 int t_obs) {
  if (radii.any_infinite())
    throw MissingArtifactError(
        "make_filtered_controller: conformal radii are infinite; the constraint is unsatisfiable. "
        "Recalibrate with a larger calibration set.");
  return [=, &predictor_model, &filter_model](
             const SystemState& state, const std::vector<AgentSnapshot>& history) -> ControlInput {
    if (static_cast<int>(history.size()) < t_obs + 1) return nominal_policy(state, history);
    return filtered_step(state, history, predictor_model, nominal_policy, filter_model, radii, dt);
  };
}

inline EpisodeResult run_filtered_episode(const ScenarioConfig& config,
                                          const PredictorModel& predictor_model,
                                          const PolicyFactory& policy_factory,
                                          const FilterModel& filter_model,
                                          const ConformalRadii& radii, std::uint64_t seed,
                                          int t_obs, const SocialPolicyParams& social = {}) {
  const Scenario scenario = sample_scenario(config, seed);
  const SystemController nominal = policy_factory(scenario, config);
  const SystemController filtered =
      make_filtered_controller(predictor_model, nominal, filter_model, radii, config.dt, t_obs);
  return rollout_episode(config, &filtered, seed, social);
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json filter_to_json(const FilterModel& model) {
  return {{"format_version", 1},
          {"kind", "filter"},
          {"num_agents", model.num_agents},
          {"horizon", model.horizon},
          {"position_scale", model.position_scale},
          {"nominal_policy", model.nominal_policy},
          {"limits",
           {{"wheelbase", model.limits.wheelbase},
            {"v_max", model.limits.v_max},
            {"a_max", model.limits.a_max},
            {"steer_max", model.limits.steer_max}}},
          {"net", mlp_to_json(model.net)}};
}

inline FilterModel filter_from_json(const nlohmann::json& j) {
  if (j.at("kind") != "filter") throw ShapeError("filter_from_json: wrong container kind");
  FilterModel model;
  model.num_agents = j.at("num_agents").get<int>();
  model.horizon = j.at("horizon").get<int>();
  model.position_scale = j.at("position_scale").get<double>();
  model.nominal_policy = j.at("nominal_policy").get<std::string>();
  model.limits.wheelbase = j.at("limits").at("wheelbase").get<double>();
  model.limits.v_max = j.at("limits").at("v_max").get<double>();
  model.limits.a_max = j.at("limits").at("a_max").get<double>();
  model.limits.steer_max = j.at("limits").at("steer_max").get<double>();
  model.net = mlp_from_json(j.at("net"));
  return model;
}

}  // namespace cpsf
