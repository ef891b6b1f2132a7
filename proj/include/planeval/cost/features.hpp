#pragma once

#include <span>
#include <vector>

#include "planeval/cost/model.hpp"
#include "planeval/core/types.hpp"

namespace planeval::cost {

// One evaluation frame of the four-term cost: goal progress, control effort,
// and RBFs at the agent's current and one-step predicted positions. The ego
// one-step prediction is the constant-velocity extrapolation under the
// commanded speed, i.e. the next rolled-out position.
struct ToyFrame {
  Vec2 ego_position{0.0, 0.0};
  double ego_heading = 0.0;
  ControlInput control{};
  Vec2 goal{0.0, 0.0};
  std::optional<Vec2> agent_position;   // current frame
  std::optional<Vec2> agent_predicted;  // one step ahead
  double dt = 0.0;
};

Vec2 toy_ego_one_step(const ToyFrame& frame);

FeatureVector features_toy(const ToyFrame& frame, const RBFParams& rbf_params);

// One evaluation frame of the six-term driving cost. `agent_futures[a][k]`
// holds the K predicted positions of agent a for lookahead steps 1..H,
// aligned with `ego_future`.
struct DriveFrame {
  Vec2 ego_position{0.0, 0.0};
  double ego_heading = 0.0;
  double ego_speed = 0.0;
  ControlInput control{};
  Vec2 goal{0.0, 0.0};
  std::span<const Lane> lanes;
  std::vector<Vec2> agent_positions;
  std::vector<std::vector<TrajectoryMode>> agent_futures;
  std::vector<Vec2> ego_future;
  double dt = 0.0;
};

// Argmin bookkeeping for the two collision terms. Ties break toward the
// lowest agent index, then the earliest lookahead step.
struct DriveCollision {
  int reactive_agent = -1;
  double reactive_distance = 0.0;
  int predictive_agent = -1;
  double predictive_mix = 0.0;          // sum_k p_k min_t' dist
  std::vector<int> mode_steps;          // achieving lookahead index per mode
  std::vector<double> mode_distances;   // achieving distance per mode
};

DriveCollision drive_collision_terms(const DriveFrame& frame);

FeatureVector features_drive(const DriveFrame& frame, const RBFParams& rbf_params);

}  // namespace planeval::cost
