#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "planeval/core/types.hpp"

namespace planeval {

// Normalizes an angle to (-pi, pi]. Idempotent.
double wrap_angle(double angle);

// One forward-Euler step. Position rows use the pre-update speed.
EgoState unicycle_step(const EgoState& state, const ControlInput& u, double dt,
                       DynamicsMode mode);

// Iterated unicycle_step; output[0] == s0, length == controls.size() + 1.
std::vector<EgoState> rollout(const EgoState& s0, std::span<const ControlInput> controls,
                              double dt, DynamicsMode mode);

struct DynamicsJacobians {
  Eigen::MatrixXd state;    // d(next state) / d(state), ds x ds
  Eigen::MatrixXd control;  // d(next state) / d(control), ds x 2
};

// Analytic Jacobians of unicycle_step.
DynamicsJacobians linearize_dynamics(const EgoState& state, const ControlInput& u,
                                     double dt, DynamicsMode mode);

// Second derivatives of each next-state component with respect to the stacked
// (state, control) vector; entry i is (ds+2) x (ds+2).
std::vector<Eigen::MatrixXd> step_hessians(const EgoState& state, const ControlInput& u,
                                           double dt, DynamicsMode mode);

// Inverts the dynamics along a logged trajectory (headings required; speeds
// required in extended mode). The result reproduces the trajectory exactly
// only when the trajectory is dynamics-consistent.
std::vector<ControlInput> recover_controls(const Trajectory& traj, DynamicsMode mode);

}  // namespace planeval
