#include "platefind/scene.hpp"

namespace platefind {

using nlohmann::json;

json box_to_json(const BoundingBox& box) {
  return json::array({box.x_min(), box.y_min(), box.x_max(), box.y_max()});
}

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::InvalidArgument, "box must be [x_min,y_min,x_max,y_max]");
  return BoundingBox(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>());
}

json quad_to_json(const Quadrilateral& quad) {
  json out = json::array();
  for (const Point& p : quad.corners()) out.push_back(json::array({p.x, p.y}));
  return out;
}

Quadrilateral quad_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::InvalidArgument, "quad must list 4 corners");
  std::array<Point, 4> pts;
  for (std::size_t i = 0; i < 4; ++i) {
    const json& p = j.at(i);
    if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::InvalidArgument, "quad corner must be [x,y]");
    pts[i] = {p.at(0).get<double>(), p.at(1).get<double>()};
  }
  return Quadrilateral(pts);
}

json scene_to_json(const SceneSpec& scene) {
  json objects = json::array();
  for (const PlantedObject& o : scene.objects) {
    json jo = {{"category", canonical_label(o.category)}, {"box", box_to_json(o.box)}, {"score", o.score}};
    if (o.plate) {
      jo["plate"] = {{"text", o.plate->text}, {"quad", quad_to_json(o.plate->quad)}};
    } else {
      jo["plate"] = nullptr;
    }
    objects.push_back(std::move(jo));
  }
  return {{"width", scene.width}, {"height", scene.height}, {"objects", std::move(objects)}};
}

SceneSpec scene_from_json(const json& doc) {
  try {
    SceneSpec scene;
    scene.width = doc.at("width").get<int>();
    scene.height = doc.at("height").get<int>();
    for (const json& jo : doc.at("objects")) {
      PlantedObject o;
      o.category = parse_vehicle_category(jo.at("category").get<std::string>());
      o.box = box_from_json(jo.at("box"));
      o.score = jo.value("score", 1.0);
      if (jo.contains("plate") && !jo.at("plate").is_null()) {
        o.plate = PlantedPlate{jo.at("plate").at("text").get<std::string>(), quad_from_json(jo.at("plate").at("quad"))};
      }
      scene.objects.push_back(std::move(o));
    }
    return scene;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed scene description: ") + e.what());
  }
}

}  // namespace platefind
