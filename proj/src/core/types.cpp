#include "planeval/core/types.hpp"

#include <cmath>

#include "planeval/core/dynamics.hpp"

namespace planeval {

namespace {

bool finite(double v) { return std::isfinite(v); }
bool finite(const Vec2& v) { return v.allFinite(); }

}  // namespace

const char* to_string(DynamicsMode mode) {
  return mode == DynamicsMode::kUnicycle ? "unicycle" : "extended_unicycle";
}

DynamicsMode dynamics_mode_from_string(const std::string& name) {
  if (name == "unicycle") return DynamicsMode::kUnicycle;
  if (name == "extended_unicycle") return DynamicsMode::kExtendedUnicycle;
  throw std::invalid_argument("unknown dynamics mode \"" + name + "\"");
}

int state_dim(DynamicsMode mode) {
  return mode == DynamicsMode::kUnicycle ? 3 : 4;
}

EgoState Trajectory::state_at(std::size_t i) const {
  if (i >= positions.size()) {
    throw std::invalid_argument("trajectory state index out of range");
  }
  EgoState s;
  s.x = positions[i].x();
  s.y = positions[i].y();
  s.heading = has_headings() ? headings[i] : 0.0;
  s.speed = has_speeds() ? speeds[i] : 0.0;
  return s;
}

void Trajectory::validate() const {
  if (positions.empty()) {
    throw std::invalid_argument("trajectory must contain at least one state");
  }
  if (!(dt > 0.0) || !finite(dt)) {
    throw std::invalid_argument("trajectory dt must be positive and finite");
  }
  for (const Vec2& p : positions) {
    if (!finite(p)) throw std::invalid_argument("trajectory position not finite");
  }
  if (has_headings() && headings.size() != positions.size()) {
    throw std::invalid_argument("trajectory headings length mismatch");
  }
  if (has_speeds() && speeds.size() != positions.size()) {
    throw std::invalid_argument("trajectory speeds length mismatch");
  }
  for (double h : headings) {
    if (!finite(h)) throw std::invalid_argument("trajectory heading not finite");
  }
  for (double v : speeds) {
    if (!finite(v)) throw std::invalid_argument("trajectory speed not finite");
  }
}

Vec2 extrapolated_position(const std::vector<Vec2>& positions, long step) {
  if (positions.empty()) {
    throw std::invalid_argument("cannot extrapolate an empty track");
  }
  const long n = static_cast<long>(positions.size());
  if (step < 0) throw std::invalid_argument("negative track step");
  if (step < n) return positions[static_cast<std::size_t>(step)];
  if (n == 1) return positions.front();
  const Vec2 disp = positions[n - 1] - positions[n - 2];
  return positions[n - 1] + static_cast<double>(step - (n - 1)) * disp;
}

void Lane::validate() const {
  if (centerline.size() < 2) {
    throw std::invalid_argument("lane centerline needs at least 2 vertices");
  }
  if (headings.size() != centerline.size()) {
    throw std::invalid_argument("lane headings length mismatch");
  }
  for (std::size_t i = 0; i + 1 < centerline.size(); ++i) {
    const Vec2 d = centerline[i + 1] - centerline[i];
    if (d.squaredNorm() <= 0.0) {
      throw std::invalid_argument("lane has coincident consecutive vertices");
    }
    const double seg_heading = std::atan2(d.y(), d.x());
    // Vertex tangents must agree with the outgoing segment; the last vertex
    // is checked against its incoming segment.
    if (std::abs(wrap_angle(headings[i] - seg_heading)) > 1e-6) {
      throw std::invalid_argument("lane heading inconsistent with segment direction");
    }
    if (i + 2 == centerline.size() &&
        std::abs(wrap_angle(headings[i + 1] - seg_heading)) > 1e-6) {
      throw std::invalid_argument("lane heading inconsistent with segment direction");
    }
  }
}

void Scene::validate() const {
  ego.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("scene dt must be positive");
  if (horizon < 1) throw std::invalid_argument("scene horizon must be >= 1");
  if (ego.size() != static_cast<std::size_t>(horizon) + 1) {
    throw std::invalid_argument("ego trajectory length must equal horizon + 1");
  }
  if (!ego.has_headings()) {
    throw std::invalid_argument("ego trajectory requires headings");
  }
  if (ego.dt != dt) throw std::invalid_argument("ego dt differs from scene dt");
  for (const auto& [id, traj] : agents) {
    traj.validate();
    if (traj.dt != dt) {
      throw std::invalid_argument("agent \"" + id + "\" dt differs from scene dt");
    }
    if (traj.size() != ego.size()) {
      throw std::invalid_argument("agent \"" + id + "\" is not time-aligned with ego");
    }
  }
  for (const Lane& lane : lanes) lane.validate();
  if (!finite(goal)) throw std::invalid_argument("scene goal not finite");
}

std::vector<AgentId> Scene::agent_ids() const {
  std::vector<AgentId> ids;
  ids.reserve(agents.size());
  for (const auto& [id, traj] : agents) ids.push_back(id);
  return ids;
}

Vec2 Scene::agent_position(const AgentId& id, long step) const {
  const auto it = agents.find(id);
  if (it == agents.end()) {
    throw std::invalid_argument("unknown agent \"" + id + "\"");
  }
  return extrapolated_position(it->second.positions, step);
}

void PredictionSet::validate(const Scene& scene) const {
  for (const auto& [id, modes] : agents) {
    if (!scene.agents.count(id)) {
      throw std::invalid_argument("prediction for unknown agent \"" + id + "\"");
    }
    if (modes.empty()) {
      throw std::invalid_argument("agent \"" + id + "\" has no prediction modes");
    }
    double total = 0.0;
    for (const TrajectoryMode& mode : modes) {
      if (!(mode.prob >= 0.0)) {
        throw std::invalid_argument("mode probability must be non-negative");
      }
      total += mode.prob;
      if (mode.states.size() != static_cast<std::size_t>(scene.horizon)) {
        throw std::invalid_argument("prediction mode for agent \"" + id +
                                    "\" must have exactly horizon waypoints");
      }
      for (const Vec2& p : mode.states) {
        if (!finite(p)) throw std::invalid_argument("prediction waypoint not finite");
      }
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("mode probabilities for agent \"" + id +
                                  "\" do not sum to 1");
    }
  }
}

void DetectionSet::validate() const {
  for (const DetectionBox& box : boxes) {
    if (!finite(box.center) || !finite(box.heading)) {
      throw std::invalid_argument("detection box not finite");
    }
    if (!(box.width > 0.0) || !(box.length > 0.0)) {
      throw std::invalid_argument("detection box extent must be positive");
    }
    if (!(box.score >= 0.0 && box.score <= 1.0)) {
      throw std::invalid_argument("detection score must lie in [0, 1]");
    }
  }
}

}  // namespace planeval
