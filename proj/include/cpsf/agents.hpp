#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpsf/geometry.hpp"
#include "cpsf/metrics.hpp"
#include "cpsf/rng.hpp"
#include "cpsf/world.hpp"

namespace cpsf {

enum class PolicyKind { SocialReactive, Orca };

struct AgentModel {
  Vec2 position;
  Vec2 velocity;
  Vec2 goal;
  double radius = 0.5;
  double pref_speed = 1.2;
  PolicyKind policy_kind = PolicyKind::SocialReactive;
};

// Velocity-space constraint: feasible velocities v satisfy
// dot(v - point, normal) >= 0, with unit normal.
struct HalfPlane {
  Vec2 point;
  Vec2 normal;

  double slack(const Vec2& v) const { return dot(v - point, normal); }
};

// ---------------------------------------------------------------------------
// Social-reactive ambient policy (goal attraction + exponential repulsion).
// ---------------------------------------------------------------------------

struct SocialPolicyParams {
  double sensing_radius = 3.0;    // m of clearance beyond which neighbors are ignored
  double repulsion_gain = 1.5;    // m/s at zero clearance
  double repulsion_falloff = 0.6; // m
  double tangential_gain = 0.5;   // swirl strength relative to radial push
  double slow_radius = 0.6;       // m, arrival deceleration zone
};

inline Vec2 goal_directed_velocity(const Vec2& position, const Vec2& goal, double pref_speed,
                                   double slow_radius) {
  const Vec2 to_goal = goal - position;
  const double dist = norm(to_goal);
  if (dist < 1e-12) return {0.0, 0.0};
  const double speed = pref_speed * std::min(1.0, dist / slow_radius);
  return to_goal * (speed / dist);
}

// Goal attraction plus repulsion that decays exponentially in clearance and
// cuts off exactly at the sensing radius. A tangential component steers
// around neighbors ahead, deflecting left on exact head-on ties.
inline Vec2 social_reactive_velocity(const AgentModel& agent, const std::vector<AgentModel>& neighbors,
                                     const SocialPolicyParams& params = {}) {
  const Vec2 v_pref =
      goal_directed_velocity(agent.position, agent.goal, agent.pref_speed, params.slow_radius);
  const Vec2 goal_dir = normalized(agent.goal - agent.position);

  Vec2 v = v_pref;
  const double cutoff_weight = std::exp(-params.sensing_radius / params.repulsion_falloff);
  for (const AgentModel& other : neighbors) {
    const Vec2 offset = other.position - agent.position;
    const double dist = norm(offset);
    if (dist < 1e-12) continue;  // coincident; repulsion direction undefined
    const double clearance = std::max(0.0, dist - agent.radius - other.radius);
    if (clearance >= params.sensing_radius) continue;
    const double w = params.repulsion_gain *
                     (std::exp(-clearance / params.repulsion_falloff) - cutoff_weight);
    const Vec2 away = offset / -dist;
    v += away * w;

    // swirl only around neighbors ahead of the goal direction
    const Vec2 toward = offset / dist;
    const double ahead = dot(toward, goal_dir);
    if (ahead > 0.0) {
      const double side = cross(toward, goal_dir);
      const Vec2 t_dir = (side >= 0.0) ? perp_left(goal_dir) : -perp_left(goal_dir);
      v += t_dir * (params.tangential_gain * w * ahead);
    }
  }
  return clamp_norm(v, agent.pref_speed);
}

// ---------------------------------------------------------------------------
// ORCA: reciprocal half-plane construction + velocity-space linear program.
// ---------------------------------------------------------------------------

namespace detail {

// Line representation used by the solver: feasible side is to the left of
// `direction` through `point`.
struct OrcaLine {
  Vec2 point;
  Vec2 direction;
};

inline OrcaLine to_line(const HalfPlane& hp) {
  return {hp.point, {hp.normal.y, -hp.normal.x}};
}

constexpr double kOrcaEpsilon = 1e-9;

// 1D program along line `index`, constrained by the prior lines and the speed
// circle. Returns false when infeasible.
inline bool linear_program1(const std::vector<OrcaLine>& lines, std::size_t index, double radius,
                            const Vec2& opt_velocity, bool direction_opt, Vec2& result) {
  const OrcaLine& line = lines[index];
  const double dot_product = dot(line.point, line.direction);
  const double discriminant = dot_product * dot_product + radius * radius - norm_sq(line.point);
  if (discriminant < 0.0) return false;  // circle misses the line entirely

  const double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot_product - sqrt_disc;
  double t_right = -dot_product + sqrt_disc;

  for (std::size_t i = 0; i < index; ++i) {
    const double denominator = cross(line.direction, lines[i].direction);
    const double numerator = cross(lines[i].direction, line.point - lines[i].point);
    if (std::abs(denominator) <= kOrcaEpsilon) {
      if (numerator < 0.0) return false;  // parallel and fully infeasible
      continue;
    }
    const double t = numerator / denominator;
    if (denominator >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    result = dot(opt_velocity, line.direction) > 0.0 ? line.point + t_right * line.direction
                                                     : line.point + t_left * line.direction;
  } else {
    const double t = dot(line.direction, opt_velocity - line.point);
    result = line.point + std::clamp(t, t_left, t_right) * line.direction;
  }
  return true;
}

// 2D program; returns the number of lines on success or the index of the
// first failing constraint.
inline std::size_t linear_program2(const std::vector<OrcaLine>& lines, double radius,
                                   const Vec2& opt_velocity, bool direction_opt, Vec2& result) {
  if (direction_opt)
    result = opt_velocity * radius;
  else if (norm_sq(opt_velocity) > radius * radius)
    result = normalized(opt_velocity) * radius;
  else
    result = opt_velocity;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (cross(lines[i].direction, lines[i].point - result) > 0.0) {
      const Vec2 saved = result;
      if (!linear_program1(lines, i, radius, opt_velocity, direction_opt, result)) {
        result = saved;
        return i;
      }
    }
  }
  return lines.size();
}

// Fallback when the program is infeasible: find the velocity minimizing the
// maximum constraint violation (safest-direction program).
inline void linear_program3(const std::vector<OrcaLine>& lines, std::size_t begin_line,
                            double radius, Vec2& result) {
  double distance = 0.0;
  for (std::size_t i = begin_line; i < lines.size(); ++i) {
    if (cross(lines[i].direction, lines[i].point - result) > distance) {
      std::vector<OrcaLine> projected;
      projected.reserve(i);
      for (std::size_t j = 0; j < i; ++j) {
        OrcaLine line;
        const double determinant = cross(lines[i].direction, lines[j].direction);
        if (std::abs(determinant) <= kOrcaEpsilon) {
          if (dot(lines[i].direction, lines[j].direction) > 0.0) continue;
          line.point = 0.5 * (lines[i].point + lines[j].point);
        } else {
          line.point = lines[i].point +
                       (cross(lines[j].direction, lines[i].point - lines[j].point) / determinant) *
                           lines[i].direction;
        }
        line.direction = normalized(lines[j].direction - lines[i].direction);
        projected.push_back(line);
      }

      const Vec2 saved = result;
      if (linear_program2(projected, radius, perp_left(lines[i].direction), true, result) <
          projected.size()) {
        result = saved;  // numerical fallback; keep previous best
      }
      distance = cross(lines[i].direction, lines[i].point - result);
    }
  }
}

}  // namespace detail

// Feasible velocity closest to pref_velocity subject to the half-planes and
// the speed circle; falls back to least-violation when infeasible.
inline Vec2 solve_velocity_program(const std::vector<HalfPlane>& half_planes, double max_speed,
                                   const Vec2& pref_velocity) {
  std::vector<detail::OrcaLine> lines;
  lines.reserve(half_planes.size());
  for (const HalfPlane& hp : half_planes) lines.push_back(detail::to_line(hp));

  Vec2 result;
  const std::size_t fail = detail::linear_program2(lines, max_speed, pref_velocity, false, result);
  if (fail < lines.size()) detail::linear_program3(lines, fail, max_speed, result);
  return result;
}

// One reciprocal half-plane per neighbor from the truncated velocity-obstacle
// geometry (responsibility share 1/2).
inline std::vector<HalfPlane> orca_half_planes(const AgentModel& agent,
                                               const std::vector<AgentModel>& neighbors,
                                               double time_horizon, double dt) {
  std::vector<HalfPlane> planes;
  planes.reserve(neighbors.size());
  const double inv_horizon = 1.0 / time_horizon;

  for (const AgentModel& other : neighbors) {
    const Vec2 relative_position = other.position - agent.position;
    const Vec2 relative_velocity = agent.velocity - other.velocity;
    const double dist_sq = norm_sq(relative_position);
    const double combined_radius = agent.radius + other.radius;
    const double combined_radius_sq = combined_radius * combined_radius;
    if (dist_sq <= 0.0)
      throw InvalidInputError("orca_half_planes: coincident agents");

    Vec2 direction;
    Vec2 u;

    if (dist_sq > combined_radius_sq) {
      const Vec2 w = relative_velocity - inv_horizon * relative_position;
      const double w_len_sq = norm_sq(w);
      const double dot_product = dot(w, relative_position);

      if (dot_product < 0.0 && dot_product * dot_product > combined_radius_sq * w_len_sq) {
        // project on the cutoff circle
        const double w_len = std::sqrt(w_len_sq);
        const Vec2 unit_w = w / w_len;
        direction = {unit_w.y, -unit_w.x};
        u = (combined_radius * inv_horizon - w_len) * unit_w;
      } else {
        // project on the nearer leg of the cone
        const double leg = std::sqrt(dist_sq - combined_radius_sq);
        if (cross(relative_position, w) > 0.0) {
          direction = Vec2{relative_position.x * leg - relative_position.y * combined_radius,
                           relative_position.x * combined_radius + relative_position.y * leg} /
                      dist_sq;
        } else {
          direction = -Vec2{relative_position.x * leg + relative_position.y * combined_radius,
                            -relative_position.x * combined_radius + relative_position.y * leg} /
                      dist_sq;
        }
        u = dot(relative_velocity, direction) * direction - relative_velocity;
      }
    } else {
      // already overlapping: push apart within one time step
      const double inv_dt = 1.0 / dt;
      const Vec2 w = relative_velocity - inv_dt * relative_position;
      const double w_len = norm(w);
      const Vec2 unit_w = w_len > 0.0 ? w / w_len : Vec2{1.0, 0.0};
      direction = {unit_w.y, -unit_w.x};
      u = (combined_radius * inv_dt - w_len) * unit_w;
    }

    HalfPlane hp;
    hp.point = agent.velocity + 0.5 * u;
    hp.normal = perp_left(direction);
    planes.push_back(hp);
  }
  return planes;
}

inline Vec2 orca_velocity(const AgentModel& agent, const std::vector<AgentModel>& neighbors,
                          double time_horizon, double dt,
                          const SocialPolicyParams& params = {}) {
  const Vec2 pref =
      goal_directed_velocity(agent.position, agent.goal, agent.pref_speed, params.slow_radius);
  if (neighbors.empty()) return pref;
  const auto planes = orca_half_planes(agent, neighbors, time_horizon, dt);
  return solve_velocity_program(planes, agent.pref_speed, pref);
}

// ---------------------------------------------------------------------------
// Ego controllers: velocity-level policies bridged to (accel, steer) by a
// proportional tracker.
// ---------------------------------------------------------------------------

struct TrackerGains {
  double speed_gain = 4.0;
  double heading_gain = 3.0;
};

// Converts a desired planar velocity into bounded (accel, steer). While the
// heading error is large the speed target is scaled down so the vehicle turns
// instead of overshooting.
inline ControlInput track_velocity(const SystemState& state, const Vec2& desired_velocity,
                                   const VehicleLimits& limits, const TrackerGains& gains = {},
                                   double turn_speed_floor = 0.0) {
  const double desired_speed = norm(desired_velocity);
  ControlInput input;
  if (desired_speed < 1e-6) {
    input.accel = -gains.speed_gain * state.speed;
    input.steer = 0.0;
    return clamp_input(input, limits);
  }
  const double desired_heading = std::atan2(desired_velocity.y, desired_velocity.x);
  const double heading_error = wrap_angle(desired_heading - state.heading);
  const double speed_scale = std::max(std::cos(heading_error), turn_speed_floor);
  input.accel = gains.speed_gain * (desired_speed * speed_scale - state.speed);
  input.steer = gains.heading_gain * heading_error;
  return clamp_input(input, limits);
}

// System controller: maps the current state and the full history of agent
// snapshots (last element = current) to a control input.
using SystemController =
    std::function<ControlInput(const SystemState&, const std::vector<AgentSnapshot>&)>;

inline std::vector<Vec2> estimate_agent_velocities(const std::vector<AgentSnapshot>& history,
                                                   double dt) {
  const AgentSnapshot& now = history.back();
  std::vector<Vec2> velocities(now.size(), Vec2{0.0, 0.0});
  if (history.size() >= 2) {
    const AgentSnapshot& prev = history[history.size() - 2];
    for (std::size_t j = 0; j < now.size(); ++j)
      velocities[j] = (now.positions[j] - prev.positions[j]) / dt;
  }
  return velocities;
}

struct AggressivePolicyParams {
  double sensing_radius = 0.8;   // m of clearance; much shorter than the social policy
  double repulsion_gain = 0.8;   // m/s
  double repulsion_falloff = 0.4;
  double slow_radius = 0.5;
};

// Stand-in for a fast, collision-prone learned policy: full speed toward the
// goal with only a short-range reactive nudge.
inline SystemController make_aggressive_controller(Vec2 goal, const ScenarioConfig& config,
                                                   AggressivePolicyParams params = {}) {
  return [goal, config, params](const SystemState& state,
                                const std::vector<AgentSnapshot>& history) -> ControlInput {
    Vec2 v = goal_directed_velocity(state.position(), goal, config.limits.v_max, params.slow_radius);
    const AgentSnapshot& now = history.back();
    const double cutoff_weight = std::exp(-params.sensing_radius / params.repulsion_falloff);
    for (const Vec2& p : now.positions) {
      const Vec2 offset = p - state.position();
      const double dist = norm(offset);
      if (dist < 1e-12) continue;
      const double clearance =
          std::max(0.0, dist - config.system_radius - config.agent_radius);
      if (clearance >= params.sensing_radius) continue;
      const double w = params.repulsion_gain *
                       (std::exp(-clearance / params.repulsion_falloff) - cutoff_weight);
      v += (offset / -dist) * w;
    }
    v = clamp_norm(v, config.limits.v_max);
    return track_velocity(state, v, config.limits, {}, 0.3);
  };
}

// The ORCA ego plans with a slightly inflated radius so that tracking error
// does not eat the exact combined-radius boundary.
inline SystemController make_orca_controller(Vec2 goal, const ScenarioConfig& config,
                                             double time_horizon = 2.0,
                                             double safety_margin = 0.1) {
  return [goal, config, time_horizon, safety_margin](
             const SystemState& state, const std::vector<AgentSnapshot>& history) -> ControlInput {
    AgentModel self;
    self.position = state.position();
    self.velocity = state.velocity();
    self.goal = goal;
    self.radius = config.system_radius + safety_margin;
    self.pref_speed = config.limits.v_max;
    self.policy_kind = PolicyKind::Orca;

    const AgentSnapshot& now = history.back();
    const auto velocities = estimate_agent_velocities(history, config.dt);
    std::vector<AgentModel> neighbors;
    neighbors.reserve(now.size());
    for (std::size_t j = 0; j < now.size(); ++j) {
      AgentModel n;
      n.position = now.positions[j];
      n.velocity = velocities[j];
      n.radius = config.agent_radius;
      neighbors.push_back(n);
    }
    const Vec2 v = orca_velocity(self, neighbors, time_horizon, config.dt);
    return track_velocity(state, v, config.limits, {8.0, 6.0}, 0.4);
  };
}

inline SystemController make_standstill_controller() {
  return [](const SystemState& state, const std::vector<AgentSnapshot>&) -> ControlInput {
    return {-4.0 * state.speed, 0.0};
  };
}

// ---------------------------------------------------------------------------
// Episode rollout and dataset generation.
// ---------------------------------------------------------------------------

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  int num_agents = 0;
  double dt = 0.1;
  std::vector<AgentSnapshot> steps;  // agent positions, one snapshot per step
  std::vector<Vec2> goals;           // agent goals
  std::vector<double> radii;         // agent radii
  std::vector<SystemState> system_states;  // empty for agents-only episodes
  Vec2 system_goal;
};

struct EpisodeResult {
  TrajectoryRecord record;
  EpisodeMetrics metrics;
};

namespace detail {

struct SimAgent {
  Vec2 position;
  Vec2 velocity;
  Vec2 goal;
  double pref_speed = 1.2;
};

// The ego, when present, is one more body the agents steer around, with its
// own short-range reaction parameters: pedestrians yield to the vehicle only
// at close quarters, which keeps the online agent distribution close to the
// system-free episodes the predictor and calibration saw. Dataset episodes
// pass nullptr so the recorded distribution is exactly system-free.
inline std::vector<Vec2> ambient_velocities(const std::vector<SimAgent>& agents,
                                            const ScenarioConfig& config,
                                            const SocialPolicyParams& social,
                                            const SystemState* ego) {
  std::vector<Vec2> out(agents.size());
  std::vector<AgentModel> models(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    models[i].position = agents[i].position;
    models[i].velocity = agents[i].velocity;
    models[i].goal = agents[i].goal;
    models[i].radius = config.agent_radius;
    models[i].pref_speed = agents[i].pref_speed;
  }
  std::vector<AgentModel> neighbors;
  neighbors.reserve(agents.size() - 1);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    neighbors.clear();
    for (std::size_t j = 0; j < agents.size(); ++j)
      if (j != i) neighbors.push_back(models[j]);
    Vec2 v = social_reactive_velocity(models[i], neighbors, social);
    if (ego && config.ego_yield_radius > 0.0) {
      const Vec2 offset = ego->position() - agents[i].position;
      const double dist = norm(offset);
      if (dist > 1e-12) {
        const double clearance =
            std::max(0.0, dist - config.agent_radius - config.system_radius);
        if (clearance < config.ego_yield_radius) {
          const double cutoff = std::exp(-config.ego_yield_radius / social.repulsion_falloff);
          const double w = config.ego_yield_gain *
                           (std::exp(-clearance / social.repulsion_falloff) - cutoff);
          v += (offset / -dist) * w;
          v = clamp_norm(v, agents[i].pref_speed);
        }
      }
    }
    out[i] = v;
  }
  return out;
}

}  // namespace detail

// Steps ambient agents (single-integrator, social-reactive) and optionally
// the ego system for up to horizon_T steps. Terminates early on ego goal
// arrival or collision. Fully deterministic given the seed.
inline EpisodeResult rollout_episode(const ScenarioConfig& config,
                                     const SystemController* system_controller,
                                     std::uint64_t rng_seed,
                                     const SocialPolicyParams& social = {}) {
  config.validate();
  const Scenario scenario = sample_scenario(config, rng_seed);

  std::vector<detail::SimAgent> agents(config.num_agents);
  for (int i = 0; i < config.num_agents; ++i) {
    agents[i].position = scenario.agent_starts[i];
    agents[i].goal = scenario.agent_goals[i];
    agents[i].pref_speed = config.agent_pref_speed;
  }

  SystemState state;
  const bool with_system = system_controller != nullptr;
  if (with_system) {
    state.pos_x = scenario.system_start.x;
    state.pos_y = scenario.system_start.y;
    const Vec2 to_goal = scenario.system_goal - scenario.system_start;
    state.heading = std::atan2(to_goal.y, to_goal.x);
    state.speed = 0.0;
  }

  EpisodeResult out;
  out.record.seed = rng_seed;
  out.record.num_agents = config.num_agents;
  out.record.dt = config.dt;
  out.record.goals = scenario.agent_goals;
  out.record.radii.assign(config.num_agents, config.agent_radius);
  out.record.system_goal = scenario.system_goal;

  EpisodeMetrics& metrics = out.metrics;
  metrics.min_agent_distance = std::numeric_limits<double>::infinity();
  metrics.time_to_goal = config.horizon_T * config.dt;
  metrics.steps_taken = config.horizon_T;
  const double collision_distance = config.system_radius + config.agent_radius;

  bool reached = false;
  for (int t = 0; t <= config.horizon_T; ++t) {
    AgentSnapshot snapshot;
    snapshot.positions.reserve(agents.size());
    for (const auto& a : agents) snapshot.positions.push_back(a.position);
    out.record.steps.push_back(snapshot);
    if (with_system) out.record.system_states.push_back(state);

    if (with_system) {
      double min_dist = std::numeric_limits<double>::infinity();
      for (const auto& a : agents) min_dist = std::min(min_dist, norm(state.position() - a.position));
      metrics.min_agent_distance = std::min(metrics.min_agent_distance, min_dist);
      if (norm(state.position() - scenario.system_goal) <= config.goal_tolerance) {
        reached = true;
        metrics.time_to_goal = t * config.dt;
        metrics.steps_taken = t;
        break;
      }
      if (min_dist < collision_distance) {
        metrics.collided = true;
        metrics.steps_taken = t;
        break;
      }
    }

    if (t == config.horizon_T) break;

    const double burst =
        (scenario.burst_episode && t >= scenario.burst_step) ? config.burst_factor : 1.0;
    for (auto& a : agents) a.pref_speed = config.agent_pref_speed * burst;

    const auto velocities =
        detail::ambient_velocities(agents, config, social, with_system ? &state : nullptr);

    if (with_system) {
      const ControlInput raw = (*system_controller)(state, out.record.steps);
      if (!std::isfinite(raw.accel) || !std::isfinite(raw.steer))
        throw InvalidInputError("rollout_episode: controller returned non-finite input at step " +
                                std::to_string(t));
      state = step_dynamics(state, clamp_input(raw, config.limits), config.dt, config.limits);
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
      agents[i].velocity = velocities[i];
      agents[i].position += velocities[i] * config.dt;
    }
  }

  if (with_system && !reached && !metrics.collided) metrics.failed = true;
  if (!with_system) {
    metrics.failed = false;
    metrics.min_agent_distance = 0.0;
    metrics.time_to_goal = 0.0;
  }
  return out;
}

// Agents-only episode of exactly horizon_T steps (horizon_T + 1 snapshots).
inline TrajectoryRecord rollout_agents_episode(const ScenarioConfig& config, std::uint64_t rng_seed,
                                               const SocialPolicyParams& social = {}) {
  return rollout_episode(config, nullptr, rng_seed, social).record;
}

struct DatasetSplit {
  std::vector<TrajectoryRecord> predictor_train;
  std::vector<TrajectoryRecord> filter_train;
  std::vector<TrajectoryRecord> calibration;
};

struct SplitFractions {
  double predictor_train = 0.5;
  double filter_train = 0.5;
  double calibration = 0.0;
};

struct SplitSizes {
  int predictor_train = 0;
  int filter_train = 0;
  int calibration = 0;
};

// K split by fraction; extra_calibration episodes are generated on top of K.
inline SplitSizes split_sizes(int K, const SplitFractions& fractions, int extra_calibration) {
  const double total = fractions.predictor_train + fractions.filter_train + fractions.calibration;
  if (!(fractions.predictor_train >= 0.0 && fractions.filter_train >= 0.0 &&
        fractions.calibration >= 0.0) ||
      total <= 0.0 || std::abs(total - 1.0) > 1e-9)
    throw InvalidInputError("split_sizes: fractions must be non-negative and sum to 1");
  SplitSizes sizes;
  sizes.predictor_train = static_cast<int>(std::llround(K * fractions.predictor_train));
  sizes.filter_train = static_cast<int>(std::llround(K * fractions.filter_train));
  sizes.calibration = K - sizes.predictor_train - sizes.filter_train + extra_calibration;
  return sizes;
}

// K episodes split by fraction plus an optional extra calibration block, all
// independently seeded from one master seed (episode i uses stream index i).
inline DatasetSplit generate_dataset(const ScenarioConfig& config, int K,
                                     const SplitFractions& fractions, int extra_calibration,
                                     std::uint64_t rng_seed,
                                     const SocialPolicyParams& social = {}) {
  const SplitSizes sizes = split_sizes(K, fractions, extra_calibration);
  const int n_pred = sizes.predictor_train;
  const int n_filter = sizes.filter_train;
  const int n_cal = sizes.calibration;

  DatasetSplit split;
  split.predictor_train.reserve(n_pred);
  split.filter_train.reserve(n_filter);
  split.calibration.reserve(n_cal);

  int index = 0;
  auto next_episode = [&]() {
    return rollout_agents_episode(config, derive_seed(rng_seed, "dataset", index++), social);
  };
  for (int i = 0; i < n_pred; ++i) split.predictor_train.push_back(next_episode());
  for (int i = 0; i < n_filter; ++i) split.filter_train.push_back(next_episode());
  for (int i = 0; i < n_cal; ++i) split.calibration.push_back(next_episode());
  return split;
}

}  // namespace cpsf
