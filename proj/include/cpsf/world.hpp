#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cpsf/config.hpp"
#include "cpsf/geometry.hpp"
#include "cpsf/rng.hpp"

namespace cpsf {

struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ego vehicle pose and speed under kinematic bicycle dynamics.
struct SystemState {
  double pos_x = 0.0;   // m
  double pos_y = 0.0;   // m
  double heading = 0.0; // rad, in (-pi, pi]
  double speed = 0.0;   // m/s, >= 0

  Vec2 position() const { return {pos_x, pos_y}; }
  Vec2 velocity() const { return {speed * std::cos(heading), speed * std::sin(heading)}; }
};

struct ControlInput {
  double accel = 0.0;  // m/s^2
  double steer = 0.0;  // rad, front-wheel angle
};

// Actuation and geometry limits of the ego vehicle.
struct VehicleLimits {
  double wheelbase = 1.0;  // m
  double v_max = 2.0;      // m/s
  double a_max = 2.0;      // m/s^2
  double steer_max = 0.6;  // rad
};

// Stacked 2D agent positions at one time step.
struct AgentSnapshot {
  std::vector<Vec2> positions;

  std::size_t size() const { return positions.size(); }
};

struct ScenarioConfig {
  int num_agents = 4;
  double dt = 0.1;                  // s
  int horizon_T = 80;               // steps
  double agent_radius = 0.5;        // m
  double system_radius = 0.5;       // m
  double goal_tolerance = 0.3;      // m
  double workspace_half_width = 6.0;  // m
  std::uint64_t rng_seed = 0;

  VehicleLimits limits;
  double agent_pref_speed = 1.2;  // m/s

  // Heavy-tail switch: with this per-episode probability all agents speed up
  // mid-episode by burst_factor, which the predictor cannot anticipate.
  double burst_prob = 0.0;
  double burst_factor = 2.5;

  // Start/goal geometry (see sample_scenario).
  double min_start_separation = 1.5;  // m, pairwise between all starts
  double system_goal_distance = 5.0;  // m, nominal ego start-to-goal distance
  double agent_min_depth = 1.0;       // m, minimum |y| of agent endpoints
  bool agent_crossing = true;         // agents cross the ego corridor vs stay on their side
  double ego_yield_radius = 1.2;      // m of clearance below which agents dodge the ego
  double ego_yield_gain = 1.5;        // m/s repulsion scale of that dodge

  void validate() const {
    if (dt <= 0.0) throw InvalidInputError("ScenarioConfig: dt must be > 0");
    if (horizon_T < 1) throw InvalidInputError("ScenarioConfig: horizon_T must be >= 1");
    if (num_agents < 1) throw InvalidInputError("ScenarioConfig: num_agents must be >= 1");
    if (agent_radius <= 0.0 || system_radius <= 0.0)
      throw InvalidInputError("ScenarioConfig: radii must be > 0");
  }

  static ScenarioConfig from_config(const Config& cfg) {
    ScenarioConfig sc;
    sc.num_agents = static_cast<int>(cfg.get_int("world.num_agents", sc.num_agents));
    sc.dt = cfg.get_double("world.dt", sc.dt);
    sc.horizon_T = static_cast<int>(cfg.get_int("world.horizon_T", sc.horizon_T));
    sc.agent_radius = cfg.get_double("world.agent_radius", sc.agent_radius);
    sc.system_radius = cfg.get_double("world.system_radius", sc.system_radius);
    sc.goal_tolerance = cfg.get_double("world.goal_tolerance", sc.goal_tolerance);
    sc.workspace_half_width = cfg.get_double("world.workspace_half_width", sc.workspace_half_width);
    sc.rng_seed = cfg.get_u64("world.rng_seed", sc.rng_seed);
    sc.limits.wheelbase = cfg.get_double("world.wheelbase", sc.limits.wheelbase);
    sc.limits.v_max = cfg.get_double("world.v_max", sc.limits.v_max);
    sc.limits.a_max = cfg.get_double("world.a_max", sc.limits.a_max);
    sc.limits.steer_max = cfg.get_double("world.steer_max", sc.limits.steer_max);
    sc.agent_pref_speed = cfg.get_double("agents.pref_speed", sc.agent_pref_speed);
    sc.burst_prob = cfg.get_double("agents.burst_prob", sc.burst_prob);
    sc.burst_factor = cfg.get_double("agents.burst_factor", sc.burst_factor);
    sc.min_start_separation = cfg.get_double("world.min_start_separation", sc.min_start_separation);
    sc.system_goal_distance = cfg.get_double("world.system_goal_distance", sc.system_goal_distance);
    sc.agent_min_depth = cfg.get_double("world.agent_min_depth", sc.agent_min_depth);
    sc.agent_crossing = cfg.get_bool("world.agent_crossing", sc.agent_crossing);
    sc.ego_yield_radius = cfg.get_double("world.ego_yield_radius", sc.ego_yield_radius);
    sc.ego_yield_gain = cfg.get_double("world.ego_yield_gain", sc.ego_yield_gain);
    sc.validate();
    return sc;
  }
};

inline ControlInput clamp_input(const ControlInput& input, const VehicleLimits& limits) {
  return {std::clamp(input.accel, -limits.a_max, limits.a_max),
          std::clamp(input.steer, -limits.steer_max, limits.steer_max)};
}

// One kinematic bicycle step. Position and heading integrate the pre-update
// speed and heading; speed updates last and is clamped to [0, v_max].
inline SystemState step_dynamics(const SystemState& state, const ControlInput& input, double dt,
                                 const VehicleLimits& limits = {}) {
  if (!std::isfinite(state.pos_x) || !std::isfinite(state.pos_y) || !std::isfinite(state.heading) ||
      !std::isfinite(state.speed) || !std::isfinite(input.accel) || !std::isfinite(input.steer))
    throw InvalidInputError("step_dynamics: non-finite state or input");
  if (dt <= 0.0) throw InvalidInputError("step_dynamics: dt must be > 0");

  SystemState next;
  next.pos_x = state.pos_x + state.speed * std::cos(state.heading) * dt;
  next.pos_y = state.pos_y + state.speed * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading + (state.speed / limits.wheelbase) * std::tan(input.steer) * dt);
  next.speed = std::clamp(state.speed + input.accel * dt, 0.0, limits.v_max);
  return next;
}

// Partial derivatives of step_dynamics, used to backpropagate through rolled
// out trajectories. The clamp on speed contributes a 0/1 gate; the heading
// wrap is identity almost everywhere.
struct DynamicsJacobian {
  // d(next)/d(state): rows = (x, y, heading, speed), columns likewise
  double d_state[4][4] = {};
  // d(next)/d(input): columns = (accel, steer)
  double d_input[4][2] = {};
};

inline DynamicsJacobian step_dynamics_jacobian(const SystemState& state, const ControlInput& input,
                                               double dt, const VehicleLimits& limits = {}) {
  DynamicsJacobian jac;
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  const double tan_steer = std::tan(input.steer);
  const double sec = 1.0 / std::cos(input.steer);

  jac.d_state[0][0] = 1.0;
  jac.d_state[0][2] = -state.speed * s * dt;
  jac.d_state[0][3] = c * dt;

  jac.d_state[1][1] = 1.0;
  jac.d_state[1][2] = state.speed * c * dt;
  jac.d_state[1][3] = s * dt;

  jac.d_state[2][2] = 1.0;
  jac.d_state[2][3] = tan_steer * dt / limits.wheelbase;
  jac.d_input[2][1] = state.speed * dt * sec * sec / limits.wheelbase;

  const double v_raw = state.speed + input.accel * dt;
  const double gate = (v_raw > 0.0 && v_raw < limits.v_max) ? 1.0 : 0.0;
  jac.d_state[3][3] = gate;
  jac.d_input[3][0] = gate * dt;
  return jac;
}

// Start/goal assignment for the ego and every agent.
struct Scenario {
  Vec2 system_start;
  Vec2 system_goal;
  std::vector<Vec2> agent_starts;
  std::vector<Vec2> agent_goals;
  bool burst_episode = false;
  int burst_step = 0;
};

// Draws a crossing scenario: the ego travels left-to-right through the middle
// of the workspace while agents cross its corridor between opposite sides.
// Rejection sampling enforces the pairwise start separation.
inline Scenario sample_scenario(const ScenarioConfig& config, std::uint64_t rng_seed) {
  config.validate();
  Rng rng(derive_seed(rng_seed, "scenario"));
  const double hw = config.workspace_half_width;
  const double margin = 2.0 * config.agent_radius;

  constexpr int max_attempts = 2000;
  Scenario sc;

  const double half_span = 0.5 * config.system_goal_distance;
  sc.system_start = {-half_span + rng.uniform(-0.4, 0.4), rng.uniform(-1.2, 1.2)};
  sc.system_goal = {half_span + rng.uniform(-0.4, 0.4), rng.uniform(-1.2, 1.2)};

  auto far_from_existing = [&](const Vec2& p) {
    if (norm(p - sc.system_start) < config.min_start_separation) return false;
    for (const Vec2& q : sc.agent_starts)
      if (norm(p - q) < config.min_start_separation) return false;
    return true;
  };
  // agents park at their goals; keep those spots clear of the ego's goal
  const double goal_clearance = std::max(2.0, config.min_start_separation);

  const double min_depth = std::min(config.agent_min_depth, hw - margin - 0.1);
  for (int i = 0; i < config.num_agents; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      // agents cross the corridor: start on one vertical side, goal mirrored
      // (or on the same side when crossing is disabled)
      const double side = (rng.uniform() < 0.5) ? 1.0 : -1.0;
      const double goal_side = config.agent_crossing ? -side : side;
      const double cross_x = rng.uniform(-half_span, half_span);
      const double depth = rng.uniform(min_depth, hw - margin);
      Vec2 start{cross_x + rng.uniform(-0.8, 0.8), side * depth};
      Vec2 goal{cross_x + rng.uniform(-0.8, 0.8), goal_side * rng.uniform(min_depth, hw - margin)};
      start.x = std::clamp(start.x, -hw + margin, hw - margin);
      goal.x = std::clamp(goal.x, -hw + margin, hw - margin);
      if (norm(goal - sc.system_goal) < goal_clearance) continue;
      if (!far_from_existing(start)) continue;
      sc.agent_starts.push_back(start);
      sc.agent_goals.push_back(goal);
      placed = true;
      break;
    }
    if (!placed)
      throw ScenarioInfeasibleError("sample_scenario: could not place agent " + std::to_string(i) +
                                    " after " + std::to_string(max_attempts) + " attempts");
  }

  sc.burst_episode = config.burst_prob > 0.0 && rng.uniform() < config.burst_prob;
  sc.burst_step = sc.burst_episode ? static_cast<int>(rng.uniform_int(
                                         static_cast<std::uint64_t>(std::max(1, config.horizon_T / 2))))
                                   : 0;
  return sc;
}

}  // namespace cpsf
