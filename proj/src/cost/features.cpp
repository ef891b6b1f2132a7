#include "planeval/cost/features.hpp"

#include <cmath>
#include <limits>

#include "planeval/core/dynamics.hpp"
#include "planeval/core/geometry.hpp"

namespace planeval::cost {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Vec2 toy_ego_one_step(const ToyFrame& frame) {
  const double v = frame.control.longitudinal;
  return frame.ego_position +
         frame.dt * v * Vec2(std::cos(frame.ego_heading), std::sin(frame.ego_heading));
}

FeatureVector features_toy(const ToyFrame& frame, const RBFParams& rbf_params) {
  if (frame.agent_position.has_value() != frame.agent_predicted.has_value()) {
    throw std::invalid_argument("toy frame needs both or neither of the agent's "
                                "current and predicted positions");
  }
  FeatureVector phi = FeatureVector::Zero(4);
  phi[0] = (frame.ego_position - frame.goal).squaredNorm();
  phi[1] = frame.control.vec().squaredNorm();
  if (frame.agent_position) {
    phi[2] = rbf((frame.ego_position - *frame.agent_position).norm(), rbf_params);
    phi[3] = rbf((toy_ego_one_step(frame) - *frame.agent_predicted).norm(), rbf_params);
  }
  return phi;
}

DriveCollision drive_collision_terms(const DriveFrame& frame) {
  DriveCollision out;
  out.reactive_distance = kInf;
  out.predictive_mix = kInf;

  for (std::size_t a = 0; a < frame.agent_positions.size(); ++a) {
    const double d = (frame.ego_position - frame.agent_positions[a]).norm();
    if (d < out.reactive_distance) {
      out.reactive_distance = d;
      out.reactive_agent = static_cast<int>(a);
    }
  }

  for (std::size_t a = 0; a < frame.agent_futures.size(); ++a) {
    const std::vector<TrajectoryMode>& modes = frame.agent_futures[a];
    double mix = 0.0;
    std::vector<int> steps(modes.size(), -1);
    std::vector<double> dists(modes.size(), kInf);
    for (std::size_t k = 0; k < modes.size(); ++k) {
      double best = kInf;
      int best_step = -1;
      for (std::size_t t = 0; t < frame.ego_future.size(); ++t) {
        const double d = (frame.ego_future[t] - modes[k].states[t]).norm();
        if (d < best) {
          best = d;
          best_step = static_cast<int>(t);
        }
      }
      steps[k] = best_step;
      dists[k] = best;
      mix += modes[k].prob * best;
    }
    if (mix < out.predictive_mix) {
      out.predictive_mix = mix;
      out.predictive_agent = static_cast<int>(a);
      out.mode_steps = std::move(steps);
      out.mode_distances = std::move(dists);
    }
  }
  return out;
}

FeatureVector features_drive(const DriveFrame& frame, const RBFParams& rbf_params) {
  if (frame.lanes.empty()) {
    throw std::invalid_argument("driving features require at least one lane");
  }
  if (frame.agent_futures.size() != frame.agent_positions.size()) {
    throw std::invalid_argument("agent futures/positions size mismatch");
  }
  for (const auto& modes : frame.agent_futures) {
    for (const TrajectoryMode& mode : modes) {
      if (mode.states.size() != frame.ego_future.size()) {
        throw std::invalid_argument("agent future not aligned with ego future");
      }
    }
  }

  const LaneProjection proj = project_to_lane(frame.ego_position, frame.lanes);
  const DriveCollision coll = drive_collision_terms(frame);

  FeatureVector phi = FeatureVector::Zero(6);
  phi[0] = (frame.ego_position - proj.point).squaredNorm();
  const double dpsi = wrap_angle(frame.ego_heading - proj.heading);
  phi[1] = dpsi * dpsi;
  phi[2] = (frame.ego_position - frame.goal).squaredNorm();
  phi[3] = rbf(coll.reactive_distance, rbf_params);
  phi[4] = frame.control.vec().squaredNorm();
  phi[5] = rbf(coll.predictive_mix, rbf_params);
  return phi;
}

}  // namespace planeval::cost
