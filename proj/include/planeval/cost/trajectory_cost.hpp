#pragma once

#include <map>
#include <span>

#include "planeval/cost/features.hpp"
#include "planeval/cost/model.hpp"
#include "planeval/core/types.hpp"

namespace planeval::cost {

struct FutureMode {
  double prob = 1.0;
  std::vector<Vec2> waypoints;  // waypoints[i] is the position at scene step i + 1
};

struct AgentFutures {
  std::vector<FutureMode> modes;
};

// The agent-side inputs of the cost: predicted futures per agent plus, in
// detection mode, detected current positions. In detection mode the agent's
// current position at scene step s is detection + s * (GT per-step
// displacement); its future is the constant-velocity track seeded there.
struct CostInputs {
  std::map<AgentId, AgentFutures> futures;
  std::map<AgentId, Vec2> detections;
  std::map<AgentId, Vec2> detection_velocities;  // per-step displacement
  bool detection_mode = false;
};

// GT futures stand in for a predictor (the weight-learning configuration).
CostInputs gt_future_inputs(const Scene& scene);
CostInputs prediction_inputs(const Scene& scene, const PredictionSet& preds);
CostInputs detection_inputs(const Scene& scene, const DetectionSet& dets);

struct TrajectoryProblem {
  const CostModel* model = nullptr;
  const Scene* scene = nullptr;
  const CostInputs* inputs = nullptr;
  int start_step = 0;        // scene step of the first frame
  EgoState start_state{};
  std::optional<Vec2> goal_override;
  // When set, only the first frame_limit frames are summed; the rollout still
  // covers all controls so later states remain available as ego futures.
  // Detection sensitivity uses this to score the current frame alone.
  std::optional<int> frame_limit;
};

TrajectoryProblem make_problem(const CostModel& model, const Scene& scene,
                               const CostInputs& inputs, int start_step = 0);

// Sum over frames t = 0..len(controls)-1 of the per-frame cost at the
// rolled-out state s_t under control u_t.
double trajectory_cost(const TrajectoryProblem& problem,
                       std::span<const ControlInput> controls);

// Per-feature totals, sum over frames of phi(frame).
FeatureVector feature_totals(const TrajectoryProblem& problem,
                             std::span<const ControlInput> controls);

struct ValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;  // over stacked controls, 2 per step
};

ValueGrad cost_gradient(const TrajectoryProblem& problem,
                        std::span<const ControlInput> controls);

struct ValueGradHess {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;  // dense, symmetrized
};

ValueGradHess cost_grad_hess(const TrajectoryProblem& problem,
                             std::span<const ControlInput> controls);

// Control gradient/Hessian of each feature total separately; the weighted
// combination reproduces cost_grad_hess since the cost is linear in theta.
struct FeatureDerivatives {
  FeatureVector totals;
  std::vector<Eigen::VectorXd> grads;
  std::vector<Eigen::MatrixXd> hessians;
};

FeatureDerivatives feature_grad_hess(const TrajectoryProblem& problem,
                                     std::span<const ControlInput> controls);

// Gradients of the trajectory cost with respect to the evaluated model
// outputs: every predicted waypoint, and in detection mode the detected
// positions themselves.
struct PredictionGradients {
  double value = 0.0;
  std::map<AgentId, std::vector<std::vector<Vec2>>> waypoints;  // [agent][mode][i]
  std::map<AgentId, Vec2> detections;
};

PredictionGradients prediction_gradients(const TrajectoryProblem& problem,
                                         std::span<const ControlInput> controls);

}  // namespace planeval::cost
