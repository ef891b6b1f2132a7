#include "planeval/core/dynamics.hpp"

#include <cmath>

namespace planeval {

namespace {

void check_finite(const EgoState& s, const ControlInput& u, double dt) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.heading) ||
      !std::isfinite(s.speed)) {
    throw std::invalid_argument("non-finite state");
  }
  if (!std::isfinite(u.longitudinal) || !std::isfinite(u.yaw_rate)) {
    throw std::invalid_argument("non-finite control");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("dt must be positive and finite");
  }
}

}  // namespace

double wrap_angle(double angle) {
  double r = std::fmod(angle + M_PI, 2.0 * M_PI);
  if (r <= 0.0) r += 2.0 * M_PI;
  return r - M_PI;
}

EgoState unicycle_step(const EgoState& state, const ControlInput& u, double dt,
                       DynamicsMode mode) {
  check_finite(state, u, dt);
  const double v = mode == DynamicsMode::kUnicycle ? u.longitudinal : state.speed;
  EgoState next;
  next.x = state.x + v * std::cos(state.heading) * dt;
  next.y = state.y + v * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading + u.yaw_rate * dt);
  next.speed = mode == DynamicsMode::kExtendedUnicycle
                   ? state.speed + u.longitudinal * dt
                   : 0.0;
  return next;
}

std::vector<EgoState> rollout(const EgoState& s0, std::span<const ControlInput> controls,
                              double dt, DynamicsMode mode) {
  if (controls.empty()) {
    throw std::invalid_argument("rollout requires at least one control");
  }
  std::vector<EgoState> states;
  states.reserve(controls.size() + 1);
  states.push_back(s0);
  for (const ControlInput& u : controls) {
    states.push_back(unicycle_step(states.back(), u, dt, mode));
  }
  return states;
}

DynamicsJacobians linearize_dynamics(const EgoState& state, const ControlInput& u,
                                     double dt, DynamicsMode mode) {
  check_finite(state, u, dt);
  const int ds = state_dim(mode);
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);

  DynamicsJacobians jac;
  jac.state = Eigen::MatrixXd::Identity(ds, ds);
  jac.control = Eigen::MatrixXd::Zero(ds, 2);

  if (mode == DynamicsMode::kUnicycle) {
    const double v = u.longitudinal;
    jac.state(0, 2) = -v * s * dt;
    jac.state(1, 2) = v * c * dt;
    jac.control(0, 0) = c * dt;
    jac.control(1, 0) = s * dt;
    jac.control(2, 1) = dt;
  } else {
    const double v = state.speed;
    jac.state(0, 2) = -v * s * dt;
    jac.state(0, 3) = c * dt;
    jac.state(1, 2) = v * c * dt;
    jac.state(1, 3) = s * dt;
    jac.control(2, 1) = dt;
    jac.control(3, 0) = dt;
  }
  return jac;
}

std::vector<Eigen::MatrixXd> step_hessians(const EgoState& state, const ControlInput& u,
                                           double dt, DynamicsMode mode) {
  check_finite(state, u, dt);
  const int ds = state_dim(mode);
  const int n = ds + 2;
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);

  std::vector<Eigen::MatrixXd> hess(ds, Eigen::MatrixXd::Zero(n, n));

  // Only the position rows are nonlinear: x' = x + v cos(h) dt, y' likewise,
  // with v a control (unicycle) or a state (extended unicycle).
  const int h_idx = 2;
  const int v_idx = mode == DynamicsMode::kUnicycle ? ds + 0 : 3;
  const double v = mode == DynamicsMode::kUnicycle ? u.longitudinal : state.speed;

  hess[0](h_idx, h_idx) = -v * c * dt;
  hess[0](h_idx, v_idx) = -s * dt;
  hess[0](v_idx, h_idx) = -s * dt;

  hess[1](h_idx, h_idx) = -v * s * dt;
  hess[1](h_idx, v_idx) = c * dt;
  hess[1](v_idx, h_idx) = c * dt;

  return hess;
}

std::vector<ControlInput> recover_controls(const Trajectory& traj, DynamicsMode mode) {
  traj.validate();
  if (traj.size() < 2) {
    throw std::invalid_argument("control recovery needs at least two states");
  }
  if (!traj.has_headings()) {
    throw std::invalid_argument("control recovery requires headings");
  }
  if (mode == DynamicsMode::kExtendedUnicycle && !traj.has_speeds()) {
    throw std::invalid_argument("extended-unicycle recovery requires speeds");
  }

  std::vector<ControlInput> controls;
  controls.reserve(traj.size() - 1);
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    const Vec2 disp = traj.positions[t + 1] - traj.positions[t];
    const Vec2 dir(std::cos(traj.headings[t]), std::sin(traj.headings[t]));
    ControlInput u;
    u.yaw_rate = wrap_angle(traj.headings[t + 1] - traj.headings[t]) / traj.dt;
    if (mode == DynamicsMode::kUnicycle) {
      u.longitudinal = disp.dot(dir) / traj.dt;
    } else {
      u.longitudinal = (traj.speeds[t + 1] - traj.speeds[t]) / traj.dt;
    }
    controls.push_back(u);
  }
  return controls;
}

}  // namespace planeval
