#include "platefind/vehicle_detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace platefind {

using nlohmann::json;

cv::Rect pixel_extent(const BoundingBox& box) {
  const int x0 = static_cast<int>(std::floor(box.x_min()));
  const int y0 = static_cast<int>(std::floor(box.y_min()));
  const int x1 = static_cast<int>(std::ceil(box.x_max()));
  const int y1 = static_cast<int>(std::ceil(box.y_max()));
  return {x0, y0, std::max(1, x1 - x0), std::max(1, y1 - y0)};
}

cv::Mat1b filled_mask(const BoundingBox& box) {
  const cv::Rect r = pixel_extent(box);
  return cv::Mat1b(r.height, r.width, static_cast<uchar>(1));
}

namespace {

void check_detection(const VehicleDetection& d, const std::string& backend) {
  if (!(d.score >= 0.0 && d.score <= 1.0)) {
    throw Error(ErrorCode::BackendFailure, backend + ": detection score outside [0,1]");
  }
  const cv::Rect r = pixel_extent(d.box);
  if (!d.mask.empty() && (d.mask.rows != r.height || d.mask.cols != r.width)) {
    throw Error(ErrorCode::BackendFailure, backend + ": mask extent differs from box extent");
  }
}

// Crops the mask to the clipped box. Falls back to a filled mask when the
// clipped region has no set pixel left, so the non-empty invariant holds.
cv::Mat1b clip_mask(const cv::Mat1b& mask, const BoundingBox& original, const BoundingBox& clipped) {
  if (mask.empty()) return filled_mask(clipped);
  const cv::Rect from = pixel_extent(original);
  const cv::Rect to = pixel_extent(clipped);
  cv::Mat1b out(to.height, to.width, static_cast<uchar>(0));
  const cv::Rect overlap = from & to;
  if (overlap.area() > 0) {
    mask(overlap - from.tl()).copyTo(out(overlap - to.tl()));
  }
  if (cv::countNonZero(out) == 0) return filled_mask(clipped);
  return out;
}

}  // namespace

std::vector<VehicleDetection> detect_vehicles(const cv::Mat& image, const DetectorBackend& backend,
                                              double score_threshold) {
  if (image.empty()) throw Error(ErrorCode::EmptyImage, "image has no pixels");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "score_threshold must lie in [0,1]");
  }
  std::vector<VehicleDetection> raw;
  try {
    raw = backend.detect(image);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BackendFailure) throw;
    throw Error(ErrorCode::BackendFailure, backend.name() + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::BackendFailure, backend.name() + ": " + e.what());
  }

  std::vector<VehicleDetection> kept;
  for (VehicleDetection& d : raw) {
    check_detection(d, backend.name());
    if (d.score < score_threshold) continue;
    const auto clipped = d.box.clipped(image.cols, image.rows);
    if (!clipped) continue;
    if (!(*clipped == d.box) || d.mask.empty()) {
      d.mask = clip_mask(d.mask, d.box, *clipped);
      d.box = *clipped;
    }
    kept.push_back(std::move(d));
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const VehicleDetection& a, const VehicleDetection& b) { return a.score > b.score; });
  return kept;
}

namespace {

[[noreturn]] void malformed(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::MalformedAnnotation, path + ": " + what);
}

double require_number(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_number()) {
    malformed(path + "." + key, "missing or non-numeric");
  }
  return obj.at(key).get<double>();
}

}  // namespace

AnnotationSet load_via_annotations(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    malformed("$", std::string("not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("_via_img_metadata")) doc = doc.at("_via_img_metadata");
  if (!doc.is_object()) malformed("$", "top level must be an object of image entries");

  AnnotationSet out;
  std::set<std::string> seen;
  for (const auto& [key, entry] : doc.items()) {
    const std::string path = "$['" + key + "']";
    if (!entry.is_object() || !entry.contains("filename") || !entry.at("filename").is_string()) {
      malformed(path + ".filename", "missing or not a string");
    }
    const std::string image_id = entry.at("filename").get<std::string>();
    if (seen.insert(image_id).second) out.image_ids.push_back(image_id);

    if (!entry.contains("regions")) continue;
    const json& regions = entry.at("regions");
    if (!regions.is_array()) malformed(path + ".regions", "must be an array");
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const std::string rpath = path + ".regions[" + std::to_string(i) + "]";
      const json& region = regions[i];
      if (!region.is_object() || !region.contains("shape_attributes")) {
        malformed(rpath + ".shape_attributes", "missing");
      }
      const json& shape = region.at("shape_attributes");
      const std::string spath = rpath + ".shape_attributes";
      if (!shape.is_object() || !shape.contains("name") || !shape.at("name").is_string()) {
        malformed(spath + ".name", "missing");
      }
      const std::string shape_name = shape.at("name").get<std::string>();
      if (shape_name != "rect") malformed(spath + ".name", "only rect regions are supported, got '" + shape_name + "'");

      const double x = require_number(shape, "x", spath);
      const double y = require_number(shape, "y", spath);
      const double w = require_number(shape, "width", spath);
      const double h = require_number(shape, "height", spath);
      if (x < 0 || y < 0 || !(w > 0) || !(h > 0)) malformed(spath, "rect must have x,y >= 0 and positive size");

      const json attrs = region.value("region_attributes", json::object());
      if (!attrs.is_object() || !attrs.contains("type") || !attrs.at("type").is_string()) {
        malformed(rpath + ".region_attributes.type", "missing or not a string");
      }
      VehicleCategory category;
      try {
        category = parse_vehicle_category(attrs.at("type").get<std::string>());
      } catch (const Error& e) {
        throw Error(ErrorCode::UnknownCategory, "image '" + image_id + "' " + rpath + ": " + e.detail());
      }
      out.regions.push_back({image_id, category, BoundingBox(x, y, x + w, y + h)});
    }
  }
  return out;
}

AnnotationSet load_via_annotations_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open annotation file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_via_annotations(buffer.str());
}

std::string annotations_to_via_json(const AnnotationSet& set) {
  json doc = json::object();
  for (const std::string& id : set.image_ids) {
    json regions = json::array();
    for (const GroundTruthRegion& r : set.regions) {
      if (r.image_id != id) continue;
      regions.push_back({{"shape_attributes",
                          {{"name", "rect"},
                           {"x", r.box.x_min()},
                           {"y", r.box.y_min()},
                           {"width", r.box.width()},
                           {"height", r.box.height()}}},
                         {"region_attributes", {{"type", std::string(canonical_label(r.category))}}}});
    }
    // VIA keys entries by filename followed by the file size; -1 marks "unknown".
    doc[id + "-1"] = {{"filename", id}, {"size", -1}, {"regions", std::move(regions)}, {"file_attributes", json::object()}};
  }
  return doc.dump(2);
}

double iou_boxes(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double ix = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double iy = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

CountMetrics finalize_metrics(int tp, int fp, int fn) {
  CountMetrics m{tp, fp, fn, 0.0, 0.0, 0.0};
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / (tp + fn);
  if (m.precision + m.recall > 0) m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

EvalMetrics evaluate_f1(const std::vector<ImagePredictions>& predictions, const AnnotationSet& truth,
                        double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "iou_threshold must lie in (0,1]");
  }
  std::map<std::string, std::vector<const GroundTruthRegion*>> by_image;
  for (const std::string& id : truth.image_ids) by_image[id];
  for (const GroundTruthRegion& r : truth.regions) by_image[r.image_id].push_back(&r);

  struct Counts {
    int tp = 0, fp = 0, fn = 0;
  };
  std::map<VehicleCategory, Counts> counts;
  for (VehicleCategory c : kAllCategories) counts[c];

  std::map<std::string, std::vector<const VehicleDetection*>> preds_by_image;
  for (const ImagePredictions& ip : predictions) {
    if (!by_image.contains(ip.image_id)) {
      throw Error(ErrorCode::UnknownImage, "prediction references unannotated image '" + ip.image_id + "'");
    }
    auto& list = preds_by_image[ip.image_id];
    for (const VehicleDetection& d : ip.detections) list.push_back(&d);
  }

  for (const auto& [image_id, gts] : by_image) {
    std::vector<const VehicleDetection*> preds = preds_by_image[image_id];
    std::stable_sort(preds.begin(), preds.end(),
                     [](const VehicleDetection* a, const VehicleDetection* b) { return a->score > b->score; });
    std::vector<bool> claimed(gts.size(), false);
    for (const VehicleDetection* p : preds) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (claimed[g] || gts[g]->category != p->category) continue;
        const double iou = iou_boxes(p->box, gts[g]->box);
        if (iou >= iou_threshold && iou > best_iou) {
          best = static_cast<int>(g);
          best_iou = iou;
        }
      }
      if (best >= 0) {
        claimed[static_cast<std::size_t>(best)] = true;
        ++counts[p->category].tp;
      } else {
        ++counts[p->category].fp;
      }
    }
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (!claimed[g]) ++counts[gts[g]->category].fn;
    }
  }

  EvalMetrics out;
  Counts total;
  for (const auto& [category, c] : counts) {
    out.per_category[category] = finalize_metrics(c.tp, c.fp, c.fn);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  out.overall = finalize_metrics(total.tp, total.fp, total.fn);
  return out;
}

std::vector<ImagePredictions> load_predictions_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open predictions file " + path);
  std::vector<ImagePredictions> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      VehicleDetection d;
      d.category = parse_vehicle_category(j.at("category").get<std::string>());
      d.box = box_from_json(j.at("box"));
      d.score = j.value("score", 1.0);
      d.mask = filled_mask(d.box);
      const std::string id = j.at("image_id").get<std::string>();
      auto [it, inserted] = index.try_emplace(id, out.size());
      if (inserted) out.push_back({id, {}});
      out[it->second].detections.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

MockDetectorBackend::MockDetectorBackend(SceneSpec scene, double jitter, std::uint64_t seed)
    : scene_(std::move(scene)), jitter_(jitter), seed_(seed) {}

std::vector<VehicleDetection> MockDetectorBackend::detect(const cv::Mat& /*image*/) const {
  std::mt19937_64 rng(seed_);
  std::uniform_real_distribution<double> offset(-jitter_, jitter_);
  std::vector<VehicleDetection> out;
  for (const PlantedObject& o : scene_.objects) {
    BoundingBox box = o.box;
    if (jitter_ > 0) {
      double x0 = std::max(0.0, o.box.x_min() + offset(rng));
      double y0 = std::max(0.0, o.box.y_min() + offset(rng));
      double x1 = std::max(0.0, o.box.x_max() + offset(rng));
      double y1 = std::max(0.0, o.box.y_max() + offset(rng));
      if (x1 <= x0) x1 = x0 + 1;
      if (y1 <= y0) y1 = y0 + 1;
      box = BoundingBox(x0, y0, x1, y1);
    }
    out.push_back({o.category, box, filled_mask(box), o.score});
  }
  return out;
}

std::unique_ptr<DetectorBackend> mock_backend_from_scene(const SceneSpec& scene, double jitter, std::uint64_t seed) {
  return std::make_unique<MockDetectorBackend>(scene, jitter, seed);
}

AnnotationSet annotations_from_scene(const std::string& image_id, const SceneSpec& scene) {
  AnnotationSet out;
  out.image_ids.push_back(image_id);
  for (const PlantedObject& o : scene.objects) out.regions.push_back({image_id, o.category, o.box});
  return out;
}

}  // namespace platefind
