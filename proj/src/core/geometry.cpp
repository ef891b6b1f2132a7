#include "planeval/core/geometry.hpp"

#include <cmath>
#include <limits>

#include "planeval/core/dynamics.hpp"

namespace planeval {

LaneProjection project_to_lane(const Vec2& p, std::span<const Lane> lanes) {
  if (lanes.empty()) {
    throw std::invalid_argument("project_to_lane requires at least one lane");
  }

  LaneProjection best;
  double best_sq = std::numeric_limits<double>::infinity();

  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const Lane& lane = lanes[li];
    for (std::size_t si = 0; si + 1 < lane.centerline.size(); ++si) {
      const Vec2& a = lane.centerline[si];
      const Vec2& b = lane.centerline[si + 1];
      const Vec2 d = b - a;
      const double len_sq = d.squaredNorm();
      const double t_raw = (p - a).dot(d) / len_sq;
      const double t = std::clamp(t_raw, 0.0, 1.0);
      const Vec2 foot = a + t * d;
      const double dist_sq = (p - foot).squaredNorm();
      if (dist_sq < best_sq) {
        best_sq = dist_sq;
        const double len = std::sqrt(len_sq);
        const double dh = wrap_angle(lane.headings[si + 1] - lane.headings[si]);
        best.point = foot;
        best.heading = wrap_angle(lane.headings[si] + t * dh);
        best.lane_index = static_cast<int>(li);
        best.segment_index = static_cast<int>(si);
        best.segment_t = t;
        best.clamped = (t_raw < 0.0 || t_raw > 1.0);
        best.segment_dir = d / len;
        best.segment_length = len;
        best.heading_rate = best.clamped ? 0.0 : dh / len;
        best.distance = std::sqrt(dist_sq);
      }
    }
  }
  return best;
}

Trajectory constant_velocity_predict(const Trajectory& traj, int steps) {
  traj.validate();
  if (steps < 1) throw std::invalid_argument("prediction needs steps >= 1");

  Vec2 disp;
  if (traj.size() >= 2) {
    disp = traj.positions[traj.size() - 1] - traj.positions[traj.size() - 2];
  } else if (traj.has_headings() && traj.has_speeds()) {
    disp = traj.speeds[0] * traj.dt *
           Vec2(std::cos(traj.headings[0]), std::sin(traj.headings[0]));
  } else {
    throw std::invalid_argument(
        "single-state trajectory without velocity cannot be extrapolated");
  }

  Trajectory pred;
  pred.dt = traj.dt;
  pred.positions.reserve(steps);
  Vec2 cur = traj.positions.back();
  for (int k = 0; k < steps; ++k) {
    cur += disp;
    pred.positions.push_back(cur);
  }
  return pred;
}

}  // namespace planeval
