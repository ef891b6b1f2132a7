#pragma once

#include <Eigen/Core>

#include <filesystem>

#include "planeval/core/scene_io.hpp"
#include "planeval/core/types.hpp"

namespace planeval::cost {

enum class FeatureSet {
  kToy4,    // goal, control effort, reactive RBF, one-step predictive RBF
  kDrive6,  // lane offset, lane heading, goal, reactive RBF, control, predictive RBF
};

int feature_count(FeatureSet set);
const char* to_string(FeatureSet set);
FeatureSet feature_set_from_string(const std::string& name);
DynamicsMode dynamics_for(FeatureSet set);

using FeatureVector = Eigen::VectorXd;

struct Theta {
  FeatureSet feature_set = FeatureSet::kToy4;
  Eigen::VectorXd weights;

  void validate() const;
};

struct RBFParams {
  double sigma = 1.0;  // meters
};

// Gaussian radial basis function exp(-d^2 / (2 sigma^2)).
double rbf(double distance, const RBFParams& params);

// Linear planning cost c = theta^T phi with an RBF collision kernel, a
// per-frame prediction lookahead of `horizon` steps, and the dynamics the
// feature set was built for.
struct CostModel {
  Theta theta;
  RBFParams rbf{};
  int horizon = 5;
  DynamicsMode dynamics = DynamicsMode::kUnicycle;

  FeatureSet feature_set() const { return theta.feature_set; }
  void validate() const;
};

CostModel make_cost_model(FeatureSet set, const Eigen::VectorXd& weights, double sigma,
                          int horizon);

// theta^T phi; throws on dimension mismatch.
double cost_eval(const CostModel& model, const FeatureVector& phi);

json cost_model_to_json(const CostModel& model, const json& meta = json());
CostModel cost_model_from_json(const json& j);
CostModel load_cost_model(const std::filesystem::path& path);
void save_cost_model(const std::filesystem::path& path, const CostModel& model,
                     const json& meta = json());

}  // namespace planeval::cost
