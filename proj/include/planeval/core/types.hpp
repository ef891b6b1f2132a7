#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace planeval {

using Vec2 = Eigen::Vector2d;
using AgentId = std::string;

// Raised when an optimization or linear-algebra step cannot proceed
// (indefinite Hessians, diverging line searches, ...). Input/schema problems
// use std::invalid_argument instead.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DynamicsMode {
  kUnicycle,          // state (x, y, heading), control (speed, yaw rate)
  kExtendedUnicycle,  // state (x, y, heading, speed), control (accel, yaw rate)
};

const char* to_string(DynamicsMode mode);
DynamicsMode dynamics_mode_from_string(const std::string& name);
int state_dim(DynamicsMode mode);

struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians in (-pi, pi]
  double speed = 0.0;    // used by the extended unicycle only

  Vec2 position() const { return {x, y}; }
};

// Control input; `longitudinal` is the commanded speed (unicycle) or
// acceleration (extended unicycle).
struct ControlInput {
  double longitudinal = 0.0;
  double yaw_rate = 0.0;

  Vec2 vec() const { return {longitudinal, yaw_rate}; }
};

struct Trajectory {
  std::vector<Vec2> positions;
  std::vector<double> headings;  // empty or one per position
  std::vector<double> speeds;    // empty or one per position
  double dt = 0.0;

  std::size_t size() const { return positions.size(); }
  bool has_headings() const { return !headings.empty(); }
  bool has_speeds() const { return !speeds.empty(); }

  EgoState state_at(std::size_t i) const;

  void validate() const;
};

// Position at `step`, extrapolating past the stored samples at the last
// per-step displacement (constant velocity).
Vec2 extrapolated_position(const std::vector<Vec2>& positions, long step);

struct Lane {
  std::vector<Vec2> centerline;
  std::vector<double> headings;  // per-vertex tangent angle

  void validate() const;
};

struct Scene {
  Trajectory ego;  // headings required; speeds required in extended scenes
  std::map<AgentId, Trajectory> agents;
  std::vector<Lane> lanes;
  Vec2 goal{0.0, 0.0};
  double dt = 0.0;
  int horizon = 0;  // episode steps; ego has horizon + 1 states

  void validate() const;

  std::vector<AgentId> agent_ids() const;
  Vec2 agent_position(const AgentId& id, long step) const;
};

struct TrajectoryMode {
  double prob = 1.0;
  std::vector<Vec2> states;  // states[i] is the position at scene step i + 1
};

// K weighted trajectory hypotheses per agent.
struct PredictionSet {
  std::map<AgentId, std::vector<TrajectoryMode>> agents;

  void validate(const Scene& scene) const;
};

struct DetectionBox {
  Vec2 center{0.0, 0.0};
  double width = 0.0;
  double length = 0.0;
  double heading = 0.0;
  double score = 0.0;
  std::optional<AgentId> agent_id;
};

struct DetectionSet {
  std::vector<DetectionBox> boxes;

  void validate() const;
};

}  // namespace planeval
