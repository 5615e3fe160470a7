#pragma once

#include <cstdint>

namespace cpsf {

// Per-episode outcome. Exactly one of {reached, collided, failed} holds:
// collided episodes are not double-counted as failures, and time_to_goal is
// capped at the mission length for episodes that never arrive.
struct EpisodeMetrics {
  bool collided = false;
  bool failed = false;
  double min_agent_distance = 0.0;  // m, min over steps of min over agents
  double time_to_goal = 0.0;        // s, horizon_T * dt when not reached
  int steps_taken = 0;

  bool reached() const { return !collided && !failed; }
};

}  // namespace cpsf
