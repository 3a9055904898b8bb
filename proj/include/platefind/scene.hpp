#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "platefind/model.hpp"

namespace platefind {

// Ground truth for one synthetic (or hand-described) scene. Mock backends
// replay it; scene generators emit it alongside the pixels they drew.

struct PlantedPlate {
  std::string text;
  Quadrilateral quad;  // full-image coordinates
};

struct PlantedObject {
  VehicleCategory category = VehicleCategory::FourWheeler;
  BoundingBox box;
  double score = 1.0;
  std::optional<PlantedPlate> plate;
};

struct SceneSpec {
  int width = 0;
  int height = 0;
  std::vector<PlantedObject> objects;
};

nlohmann::json scene_to_json(const SceneSpec& scene);
/// Throws InvalidArgument / UnknownCategory on malformed input.
SceneSpec scene_from_json(const nlohmann::json& doc);

nlohmann::json box_to_json(const BoundingBox& box);
BoundingBox box_from_json(const nlohmann::json& j);
nlohmann::json quad_to_json(const Quadrilateral& quad);
Quadrilateral quad_from_json(const nlohmann::json& j);

}  // namespace platefind
