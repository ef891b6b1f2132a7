#include "planeval/cost/descent.hpp"

#include <cmath>

namespace planeval::cost {

namespace {

std::vector<ControlInput> unpack(const Eigen::VectorXd& x) {
  std::vector<ControlInput> controls(x.size() / 2);
  for (std::size_t t = 0; t < controls.size(); ++t) {
    controls[t] = ControlInput{x[2 * t], x[2 * t + 1]};
  }
  return controls;
}

Eigen::VectorXd pack(std::span<const ControlInput> controls) {
  Eigen::VectorXd x(2 * controls.size());
  for (std::size_t t = 0; t < controls.size(); ++t) {
    x[2 * t] = controls[t].longitudinal;
    x[2 * t + 1] = controls[t].yaw_rate;
  }
  return x;
}

}  // namespace

DescentResult minimize_trajectory_cost(const TrajectoryProblem& problem,
                                       std::span<const ControlInput> init,
                                       const DescentOptions& options) {
  Eigen::VectorXd x = pack(init);
  std::vector<ControlInput> controls = unpack(x);
  ValueGrad cur = cost_gradient(problem, controls);
  if (!std::isfinite(cur.value)) {
    throw NumericalError("trajectory cost is non-finite at the initial controls");
  }

  DescentResult result;
  double alpha = 1.0 / std::max(1.0, cur.grad.norm());
  Eigen::VectorXd x_prev = x;
  Eigen::VectorXd g_prev = cur.grad;
  bool have_prev = false;

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (cur.grad.lpNorm<Eigen::Infinity>() <= options.grad_tolerance) {
      result.converged = true;
      break;
    }

    if (have_prev) {
      const Eigen::VectorXd s = x - x_prev;
      const Eigen::VectorXd y = cur.grad - g_prev;
      const double sy = s.dot(y);
      if (sy > 1e-16) {
        alpha = std::clamp(s.dot(s) / sy, 1e-10, 1e8);
      }
    }

    // Armijo backtracking on f(x - a g)
    const double g_sq = cur.grad.squaredNorm();
    double a = alpha;
    double f_new = 0.0;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x - a * cur.grad;
      f_new = trajectory_cost(problem, unpack(x_new));
      if (!std::isfinite(f_new)) {
        throw NumericalError("trajectory cost diverged during line search");
      }
      if (f_new <= cur.value - 1e-4 * a * g_sq) {
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    if (!accepted) {
      // no admissible step; the iterate is as good as this scheme gets
      result.converged = true;
      break;
    }

    x_prev = x;
    g_prev = cur.grad;
    have_prev = true;

    const double f_old = cur.value;
    x = x_new;
    controls = unpack(x);
    cur = cost_gradient(problem, controls);

    if (std::abs(f_old - cur.value) <= options.rel_tolerance * std::max(1.0, std::abs(f_old))) {
      ++it;
      result.converged = true;
      break;
    }
  }

  result.controls = std::move(controls);
  result.objective = cur.value;
  result.iterations = it;
  return result;
}

}  // namespace planeval::cost
