#include "planeval/core/scene_io.hpp"

#include <fstream>

namespace planeval {

namespace {

Vec2 vec2_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw std::invalid_argument(context + " must be a [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json vec2_to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

double number(const json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) {
    throw std::invalid_argument("missing key \"" + std::string(key) + "\" in " + context);
  }
  if (!j.at(key).is_number()) {
    throw std::invalid_argument("key \"" + std::string(key) + "\" in " + context +
                                " must be a number");
  }
  return j.at(key).get<double>();
}

}  // namespace

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!obj.is_object()) {
    throw std::invalid_argument(context + " must be a JSON object");
  }
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument("unknown key \"" + item.key() + "\" in " + context);
    }
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open \"" + path.string() + "\"");
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("invalid JSON in \"" + path.string() + "\": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw std::invalid_argument("cannot write \"" + tmp.string() + "\"");
    }
    out << value.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Scene scene_from_json(const json& j) {
  check_keys(j, {"dt", "horizon", "goal", "ego", "agents", "lanes", "meta"}, "scene");

  Scene scene;
  scene.dt = number(j, "dt", "scene");
  if (!j.contains("horizon") || !j.at("horizon").is_number_integer()) {
    throw std::invalid_argument("scene horizon must be an integer");
  }
  scene.horizon = j.at("horizon").get<int>();
  scene.goal = vec2_from_json(j.at("goal"), "scene goal");

  if (!j.contains("ego")) throw std::invalid_argument("missing key \"ego\" in scene");
  check_keys(j.at("ego"), {"states"}, "scene ego");
  const json& ego_states = j.at("ego").at("states");
  if (!ego_states.is_array() || ego_states.empty()) {
    throw std::invalid_argument("ego states must be a non-empty array");
  }
  const std::size_t ego_width = ego_states[0].size();
  if (ego_width != 3 && ego_width != 4) {
    throw std::invalid_argument("ego state rows must be [x, y, heading] or "
                                "[x, y, heading, speed]");
  }
  scene.ego.dt = scene.dt;
  for (const json& row : ego_states) {
    if (!row.is_array() || row.size() != ego_width) {
      throw std::invalid_argument("ego state rows must have uniform width");
    }
    scene.ego.positions.emplace_back(row[0].get<double>(), row[1].get<double>());
    scene.ego.headings.push_back(row[2].get<double>());
    if (ego_width == 4) scene.ego.speeds.push_back(row[3].get<double>());
  }

  if (j.contains("agents")) {
    if (!j.at("agents").is_object()) {
      throw std::invalid_argument("scene agents must be an object");
    }
    for (const auto& item : j.at("agents").items()) {
      check_keys(item.value(), {"states"}, "agent \"" + item.key() + "\"");
      Trajectory traj;
      traj.dt = scene.dt;
      for (const json& row : item.value().at("states")) {
        traj.positions.push_back(vec2_from_json(row, "agent state"));
      }
      scene.agents.emplace(item.key(), std::move(traj));
    }
  }

  if (j.contains("lanes")) {
    for (const json& lj : j.at("lanes")) {
      check_keys(lj, {"centerline", "headings"}, "lane");
      Lane lane;
      for (const json& row : lj.at("centerline")) {
        lane.centerline.push_back(vec2_from_json(row, "lane vertex"));
      }
      for (const json& h : lj.at("headings")) {
        lane.headings.push_back(h.get<double>());
      }
      scene.lanes.push_back(std::move(lane));
    }
  }

  scene.validate();
  return scene;
}

json scene_to_json(const Scene& scene, const json& meta) {
  json j;
  j["dt"] = scene.dt;
  j["horizon"] = scene.horizon;
  j["goal"] = vec2_to_json(scene.goal);

  json states = json::array();
  for (std::size_t i = 0; i < scene.ego.size(); ++i) {
    json row = json::array({scene.ego.positions[i].x(), scene.ego.positions[i].y(),
                            scene.ego.headings[i]});
    if (scene.ego.has_speeds()) row.push_back(scene.ego.speeds[i]);
    states.push_back(std::move(row));
  }
  j["ego"] = json{{"states", std::move(states)}};

  json agents = json::object();
  for (const auto& [id, traj] : scene.agents) {
    json rows = json::array();
    for (const Vec2& p : traj.positions) rows.push_back(vec2_to_json(p));
    agents[id] = json{{"states", std::move(rows)}};
  }
  j["agents"] = std::move(agents);

  json lanes = json::array();
  for (const Lane& lane : scene.lanes) {
    json centerline = json::array();
    for (const Vec2& p : lane.centerline) centerline.push_back(vec2_to_json(p));
    lanes.push_back(json{{"centerline", std::move(centerline)},
                         {"headings", lane.headings}});
  }
  j["lanes"] = std::move(lanes);

  if (!meta.is_null()) j["meta"] = meta;
  return j;
}

Scene load_scene(const std::filesystem::path& path) {
  return scene_from_json(read_json_file(path));
}

void save_scene(const std::filesystem::path& path, const Scene& scene, const json& meta) {
  write_json_file(path, scene_to_json(scene, meta));
}

PredictionSet predictions_from_json(const json& j) {
  check_keys(j, {"agents", "meta"}, "prediction set");
  PredictionSet preds;
  if (!j.contains("agents") || !j.at("agents").is_object()) {
    throw std::invalid_argument("prediction set requires an \"agents\" object");
  }
  for (const auto& item : j.at("agents").items()) {
    check_keys(item.value(), {"modes"}, "prediction for \"" + item.key() + "\"");
    std::vector<TrajectoryMode> modes;
    for (const json& mj : item.value().at("modes")) {
      check_keys(mj, {"prob", "states"}, "prediction mode");
      TrajectoryMode mode;
      mode.prob = number(mj, "prob", "prediction mode");
      for (const json& row : mj.at("states")) {
        mode.states.push_back(vec2_from_json(row, "prediction waypoint"));
      }
      modes.push_back(std::move(mode));
    }
    preds.agents.emplace(item.key(), std::move(modes));
  }
  return preds;
}

json predictions_to_json(const PredictionSet& preds, const json& meta) {
  json agents = json::object();
  for (const auto& [id, modes] : preds.agents) {
    json mode_rows = json::array();
    for (const TrajectoryMode& mode : modes) {
      json states = json::array();
      for (const Vec2& p : mode.states) states.push_back(vec2_to_json(p));
      mode_rows.push_back(json{{"prob", mode.prob}, {"states", std::move(states)}});
    }
    agents[id] = json{{"modes", std::move(mode_rows)}};
  }
  json j;
  j["agents"] = std::move(agents);
  if (!meta.is_null()) j["meta"] = meta;
  return j;
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  return predictions_from_json(read_json_file(path));
}

void save_predictions(const std::filesystem::path& path, const PredictionSet& preds,
                      const json& meta) {
  write_json_file(path, predictions_to_json(preds, meta));
}

DetectionSet detections_from_json(const json& j) {
  check_keys(j, {"boxes", "meta"}, "detection set");
  DetectionSet dets;
  if (!j.contains("boxes") || !j.at("boxes").is_array()) {
    throw std::invalid_argument("detection set requires a \"boxes\" array");
  }
  for (const json& bj : j.at("boxes")) {
    check_keys(bj, {"center", "extent", "heading", "score", "agent_id"}, "detection box");
    DetectionBox box;
    box.center = vec2_from_json(bj.at("center"), "detection center");
    const Vec2 extent = vec2_from_json(bj.at("extent"), "detection extent");
    box.width = extent.x();
    box.length = extent.y();
    box.heading = number(bj, "heading", "detection box");
    box.score = number(bj, "score", "detection box");
    if (bj.contains("agent_id")) box.agent_id = bj.at("agent_id").get<std::string>();
    dets.boxes.push_back(std::move(box));
  }
  dets.validate();
  return dets;
}

json detections_to_json(const DetectionSet& dets, const json& meta) {
  json boxes = json::array();
  for (const DetectionBox& box : dets.boxes) {
    json bj;
    bj["center"] = vec2_to_json(box.center);
    bj["extent"] = json::array({box.width, box.length});
    bj["heading"] = box.heading;
    bj["score"] = box.score;
    if (box.agent_id) bj["agent_id"] = *box.agent_id;
    boxes.push_back(std::move(bj));
  }
  json j;
  j["boxes"] = std::move(boxes);
  if (!meta.is_null()) j["meta"] = meta;
  return j;
}

DetectionSet load_detections(const std::filesystem::path& path) {
  return detections_from_json(read_json_file(path));
}

void save_detections(const std::filesystem::path& path, const DetectionSet& dets,
                     const json& meta) {
  write_json_file(path, detections_to_json(dets, meta));
}

}  // namespace planeval
