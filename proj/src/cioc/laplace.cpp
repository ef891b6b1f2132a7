#include "planeval/cioc/laplace.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "planeval/core/dynamics.hpp"

namespace planeval::cioc {

namespace {

struct Factored {
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
};

Factored factor(const Eigen::MatrixXd& m) {
  Factored f;
  f.llt.compute(m);
  f.ok = f.llt.info() == Eigen::Success;
  if (f.ok) {
    // LLT can "succeed" on semidefinite input; insist on positive pivots.
    const auto& L = f.llt.matrixLLT();
    for (long i = 0; i < L.rows(); ++i) {
      if (!(L(i, i) > 0.0) || !std::isfinite(L(i, i))) {
        f.ok = false;
        break;
      }
    }
  }
  return f;
}

double nll_of(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& cost_grad) {
  const long d = cost_grad.size();
  double logdet = 0.0;
  for (long i = 0; i < d; ++i) logdet += std::log(llt.matrixLLT()(i, i));
  logdet *= 2.0;
  const Eigen::VectorXd y = llt.solve(cost_grad);
  return 0.5 * cost_grad.dot(y) - 0.5 * logdet +
         0.5 * static_cast<double>(d) * std::log(2.0 * M_PI);
}

}  // namespace

Demonstration assemble_demo(const Scene& scene, DynamicsMode mode, double tolerance) {
  scene.validate();
  Demonstration demo;
  demo.scene = scene;
  demo.controls = recover_controls(scene.ego, mode);

  const std::vector<EgoState> states =
      rollout(scene.ego.state_at(0), demo.controls, scene.dt, mode);
  for (std::size_t t = 0; t < states.size(); ++t) {
    const double err = (states[t].position() - scene.ego.positions[t]).norm();
    if (err > tolerance) {
      throw std::invalid_argument(
          "ego trajectory is not dynamics-consistent (rollout error " +
          std::to_string(err) + " m)");
    }
  }

  demo.inputs = cost::gt_future_inputs(demo.scene);
  return demo;
}

NllResult laplace_nll_from_derivatives(const Eigen::VectorXd& cost_grad,
                                       const Eigen::MatrixXd& cost_hess,
                                       double epsilon) {
  const long d = cost_grad.size();
  if (cost_hess.rows() != d || cost_hess.cols() != d) {
    throw std::invalid_argument("gradient/Hessian dimension mismatch");
  }

  const Eigen::MatrixXd conditioned =
      cost_hess + epsilon * Eigen::MatrixXd::Identity(d, d);
  const Factored cond = factor(conditioned);
  if (!cond.ok) {
    throw NumericalError(
        "cost Hessian is not positive definite after conditioning; the cost is "
        "degenerate along some control direction");
  }

  NllResult result;
  result.nll = nll_of(cond.llt, cost_grad);

  const Factored raw = factor(cost_hess);
  if (raw.ok) {
    result.conditioning_delta = std::abs(result.nll - nll_of(raw.llt, cost_grad));
    result.conditioned = result.conditioning_delta > 1e-3;
  } else {
    result.conditioning_delta = std::numeric_limits<double>::infinity();
    result.conditioned = true;
  }
  return result;
}

NllResult laplace_nll(const cost::CostModel& model, const Demonstration& demo,
                      double epsilon) {
  const cost::TrajectoryProblem pb =
      cost::make_problem(model, demo.scene, demo.inputs);
  const cost::ValueGradHess d = cost::cost_grad_hess(pb, demo.controls);
  return laplace_nll_from_derivatives(d.grad, d.hess, epsilon);
}

DemoDerivatives::DemoDerivatives(const cost::CostModel& reference,
                                 const Demonstration& demo) {
  const cost::TrajectoryProblem pb =
      cost::make_problem(reference, demo.scene, demo.inputs);
  cost::FeatureDerivatives d = cost::feature_grad_hess(pb, demo.controls);
  grads_ = std::move(d.grads);
  hessians_ = std::move(d.hessians);
}

NllResult DemoDerivatives::nll(const Eigen::VectorXd& theta, double epsilon) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(control_dim());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(control_dim(), control_dim());
  for (std::size_t f = 0; f < grads_.size(); ++f) {
    g += theta[f] * grads_[f];
    h += theta[f] * hessians_[f];
  }
  return laplace_nll_from_derivatives(g, h, epsilon);
}

Eigen::VectorXd DemoDerivatives::nll_theta_gradient(const Eigen::VectorXd& theta,
                                                    double epsilon) const {
  const long d = control_dim();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t f = 0; f < grads_.size(); ++f) {
    g += theta[f] * grads_[f];
    h += theta[f] * hessians_[f];
  }
  const Eigen::MatrixXd conditioned = h + epsilon * Eigen::MatrixXd::Identity(d, d);
  const Factored cond = factor(conditioned);
  if (!cond.ok) {
    throw NumericalError("cost Hessian is not positive definite after conditioning");
  }
  const Eigen::VectorXd y = cond.llt.solve(g);
  const Eigen::MatrixXd inv = cond.llt.solve(Eigen::MatrixXd::Identity(d, d));

  // d/dtheta_f [ 0.5 g^T M^-1 g - 0.5 log|M| ] with g, M linear in theta
  Eigen::VectorXd grad(static_cast<long>(grads_.size()));
  for (std::size_t f = 0; f < grads_.size(); ++f) {
    const double term_g = grads_[f].dot(y);
    const double term_h = -0.5 * y.dot(hessians_[f] * y);
    const double term_logdet = -0.5 * inv.cwiseProduct(hessians_[f]).sum();
    grad[static_cast<long>(f)] = term_g + term_h + term_logdet;
  }
  return grad;
}

}  // namespace planeval::cioc
