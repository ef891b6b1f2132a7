#pragma once

#include <span>

#include "planeval/core/types.hpp"

namespace planeval {

// Closest point over a set of lane polylines, with the interpolated tangent
// heading at that point and enough local information to differentiate the
// lane-deviation terms.
struct LaneProjection {
  Vec2 point{0.0, 0.0};
  double heading = 0.0;
  int lane_index = -1;
  int segment_index = -1;
  double segment_t = 0.0;        // clamped parameter in [0, 1]
  bool clamped = false;          // projection hit a vertex (no orthogonal foot)
  Vec2 segment_dir{1.0, 0.0};    // unit direction of the winning segment
  double segment_length = 0.0;
  double heading_rate = 0.0;     // d(heading)/d(arclength) along the segment
  double distance = 0.0;
};

// Nearest lane chosen by Euclidean point distance; ties broken by lowest lane
// index, then lowest segment index.
LaneProjection project_to_lane(const Vec2& p, std::span<const Lane> lanes);

// Extrapolates the last position by the last per-step displacement for
// `steps` steps; returns only the predicted future states.
Trajectory constant_velocity_predict(const Trajectory& traj, int steps);

}  // namespace planeval
