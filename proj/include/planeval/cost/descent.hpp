#pragma once

#include <span>
#include <vector>

#include "planeval/cost/trajectory_cost.hpp"

namespace planeval::cost {

struct DescentOptions {
  int max_iterations = 500;
  double rel_tolerance = 1e-8;    // relative objective change
  double grad_tolerance = 1e-10;  // infinity norm of the gradient
};

struct DescentResult {
  std::vector<ControlInput> controls;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Monotone gradient descent over the stacked controls with Barzilai-Borwein
// step sizes and an Armijo backtracking safeguard. Throws NumericalError when
// the objective turns non-finite.
DescentResult minimize_trajectory_cost(const TrajectoryProblem& problem,
                                       std::span<const ControlInput> init,
                                       const DescentOptions& options = {});

}  // namespace planeval::cost
