#include "planeval/cost/model.hpp"

#include <cmath>

namespace planeval::cost {

int feature_count(FeatureSet set) { return set == FeatureSet::kToy4 ? 4 : 6; }

const char* to_string(FeatureSet set) {
  return set == FeatureSet::kToy4 ? "toy4" : "drive6";
}

FeatureSet feature_set_from_string(const std::string& name) {
  if (name == "toy4") return FeatureSet::kToy4;
  if (name == "drive6") return FeatureSet::kDrive6;
  throw std::invalid_argument("unknown feature set \"" + name + "\"");
}

DynamicsMode dynamics_for(FeatureSet set) {
  return set == FeatureSet::kToy4 ? DynamicsMode::kUnicycle
                                  : DynamicsMode::kExtendedUnicycle;
}

void Theta::validate() const {
  if (weights.size() != feature_count(feature_set)) {
    throw std::invalid_argument("theta length does not match feature set");
  }
  if (!weights.allFinite()) {
    throw std::invalid_argument("theta weights must be finite");
  }
}

double rbf(double distance, const RBFParams& params) {
  if (distance < 0.0) throw std::invalid_argument("rbf distance must be >= 0");
  if (!(params.sigma > 0.0)) throw std::invalid_argument("rbf sigma must be > 0");
  if (std::isinf(distance)) return 0.0;
  return std::exp(-distance * distance / (2.0 * params.sigma * params.sigma));
}

void CostModel::validate() const {
  theta.validate();
  if (!(rbf.sigma > 0.0)) throw std::invalid_argument("rbf sigma must be > 0");
  if (horizon < 1) throw std::invalid_argument("model horizon must be >= 1");
  if (dynamics != dynamics_for(theta.feature_set)) {
    throw std::invalid_argument("feature set is inconsistent with dynamics mode");
  }
}

CostModel make_cost_model(FeatureSet set, const Eigen::VectorXd& weights, double sigma,
                          int horizon) {
  CostModel model;
  model.theta = Theta{set, weights};
  model.rbf.sigma = sigma;
  model.horizon = horizon;
  model.dynamics = dynamics_for(set);
  model.validate();
  return model;
}

double cost_eval(const CostModel& model, const FeatureVector& phi) {
  if (phi.size() != model.theta.weights.size()) {
    throw std::invalid_argument("feature vector dimension mismatch");
  }
  return model.theta.weights.dot(phi);
}

json cost_model_to_json(const CostModel& model, const json& meta) {
  json j;
  j["feature_set"] = to_string(model.feature_set());
  j["theta"] = std::vector<double>(model.theta.weights.begin(), model.theta.weights.end());
  j["sigma"] = model.rbf.sigma;
  j["horizon"] = model.horizon;
  j["dynamics"] = planeval::to_string(model.dynamics);
  if (!meta.is_null()) j["meta"] = meta;
  return j;
}

CostModel cost_model_from_json(const json& j) {
  check_keys(j, {"feature_set", "theta", "sigma", "horizon", "dynamics", "meta"},
             "cost model");
  CostModel model;
  model.theta.feature_set = feature_set_from_string(j.at("feature_set").get<std::string>());
  const auto weights = j.at("theta").get<std::vector<double>>();
  model.theta.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                          static_cast<long>(weights.size()));
  model.rbf.sigma = j.at("sigma").get<double>();
  model.horizon = j.at("horizon").get<int>();
  model.dynamics = dynamics_mode_from_string(j.at("dynamics").get<std::string>());
  model.validate();
  return model;
}

CostModel load_cost_model(const std::filesystem::path& path) {
  return cost_model_from_json(read_json_file(path));
}

void save_cost_model(const std::filesystem::path& path, const CostModel& model,
                     const json& meta) {
  write_json_file(path, cost_model_to_json(model, meta));
}

}  // namespace planeval::cost
