#pragma once

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>

#include "planeval/core/types.hpp"

namespace planeval {

using json = nlohmann::json;

// Rejects any key of `obj` that is not listed, naming the offending key.
void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context);

json read_json_file(const std::filesystem::path& path);
// Writes to a temporary file and renames it into place.
void write_json_file(const std::filesystem::path& path, const json& value);

Scene scene_from_json(const json& j);
json scene_to_json(const Scene& scene, const json& meta = json());
Scene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const Scene& scene,
                const json& meta = json());

PredictionSet predictions_from_json(const json& j);
json predictions_to_json(const PredictionSet& preds, const json& meta = json());
PredictionSet load_predictions(const std::filesystem::path& path);
void save_predictions(const std::filesystem::path& path, const PredictionSet& preds,
                      const json& meta = json());

DetectionSet detections_from_json(const json& j);
json detections_to_json(const DetectionSet& dets, const json& meta = json());
DetectionSet load_detections(const std::filesystem::path& path);
void save_detections(const std::filesystem::path& path, const DetectionSet& dets,
                     const json& meta = json());

}  // namespace planeval
