#pragma once

#include <span>

#include "planeval/cost/trajectory_cost.hpp"

namespace planeval::cioc {

// An expert rollout to learn from: the scene, the stacked controls recovered
// from the logged ego trajectory, and the cost inputs (GT futures).
struct Demonstration {
  Scene scene;
  std::vector<ControlInput> controls;
  cost::CostInputs inputs;
};

// Recovers controls by dynamics inversion and verifies that re-rolling them
// reproduces the logged ego states within `tolerance` meters.
Demonstration assemble_demo(const Scene& scene, DynamicsMode mode,
                            double tolerance = 1e-6);

struct NllResult {
  double nll = 0.0;
  bool conditioned = false;    // epsilon changed the NLL by more than 1e-3,
                               // or the raw Hessian was not positive definite
  double conditioning_delta = 0.0;
};

// Laplace (locally-optimal) trajectory likelihood. With r = -c, g = dr/du and
// H = d2r/du2, log P(u) ~ 0.5 g^T H^-1 g + 0.5 log|-H| - (d/2) log(2 pi);
// this returns -log P evaluated from the cost derivatives, conditioning -H
// with epsilon * I. Throws NumericalError when -H is not positive definite
// after conditioning.
NllResult laplace_nll_from_derivatives(const Eigen::VectorXd& cost_grad,
                                       const Eigen::MatrixXd& cost_hess,
                                       double epsilon = 1e-6);

NllResult laplace_nll(const cost::CostModel& model, const Demonstration& demo,
                      double epsilon = 1e-6);

// Feature-wise control derivatives of one demonstration. The cost is linear
// in theta, so g(theta) and H(theta) are linear combinations of these blocks
// and the NLL (and its theta-gradient) become cheap to evaluate during the
// fit.
class DemoDerivatives {
 public:
  DemoDerivatives(const cost::CostModel& reference, const Demonstration& demo);

  NllResult nll(const Eigen::VectorXd& theta, double epsilon) const;
  Eigen::VectorXd nll_theta_gradient(const Eigen::VectorXd& theta, double epsilon) const;
  int control_dim() const { return static_cast<int>(grads_.empty() ? 0 : grads_[0].size()); }

 private:
  std::vector<Eigen::VectorXd> grads_;
  std::vector<Eigen::MatrixXd> hessians_;
};

}  // namespace planeval::cioc
