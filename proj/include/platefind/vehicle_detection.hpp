#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "platefind/model.hpp"
#include "platefind/scene.hpp"

namespace platefind {

/// Pixel rectangle covered by a box: [floor(min), ceil(max)).
cv::Rect pixel_extent(const BoundingBox& box);

/// All-ones mask over the box extent, for backends that only produce boxes.
cv::Mat1b filled_mask(const BoundingBox& box);

struct VehicleDetection {
  VehicleCategory category = VehicleCategory::FourWheeler;
  BoundingBox box;
  cv::Mat1b mask;  // same extent as pixel_extent(box); non-zero = object
  double score = 0.0;
};

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual std::string name() const = 0;
  /// Whether detect() may be called from several threads at once.
  virtual bool concurrent_safe() const { return true; }
  virtual std::vector<VehicleDetection> detect(const cv::Mat& image) const = 0;
};

/// Runs the backend and keeps detections with score >= score_threshold,
/// clipped to the image and sorted by descending score (stable).
/// Throws EmptyImage, InvalidArgument, or BackendFailure naming the backend.
std::vector<VehicleDetection> detect_vehicles(const cv::Mat& image, const DetectorBackend& backend,
                                              double score_threshold);

struct GroundTruthRegion {
  std::string image_id;
  VehicleCategory category = VehicleCategory::FourWheeler;
  BoundingBox box;
};

// Every image named by the document, including those without regions, plus
// the regions themselves. An image in `image_ids` with no region is an
// explicit "nothing here" truth entry.
struct AnnotationSet {
  std::vector<std::string> image_ids;
  std::vector<GroundTruthRegion> regions;
};

/// Parses the VIA rect-region subset. image_id is the entry's "filename".
/// Accepts either the bare image map or a project file wrapping it in
/// "_via_img_metadata". Throws MalformedAnnotation with a JSON path, or
/// UnknownCategory with the image id.
AnnotationSet load_via_annotations(std::string_view document);
AnnotationSet load_via_annotations_file(const std::string& path);
/// Bare VIA image map (rect regions, "type" attribute) that the loader reads back.
std::string annotations_to_via_json(const AnnotationSet& set);

double iou_boxes(const BoundingBox& a, const BoundingBox& b) noexcept;

struct CountMetrics {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Fills precision/recall/f1 from the counts; empty denominators give 0.
CountMetrics finalize_metrics(int tp, int fp, int fn);

struct EvalMetrics {
  std::map<VehicleCategory, CountMetrics> per_category;  // all four present
  CountMetrics overall;
};

struct ImagePredictions {
  std::string image_id;
  std::vector<VehicleDetection> detections;
};

inline constexpr double kDefaultMatchIou = 0.5;

/// Greedy score-ordered matching per image against same-category truth.
/// Equal scores keep list order. Throws UnknownImage for predictions on an
/// image the annotation set does not know, InvalidArgument on a bad threshold.
EvalMetrics evaluate_f1(const std::vector<ImagePredictions>& predictions, const AnnotationSet& truth,
                        double iou_threshold = kDefaultMatchIou);

/// Reads JSON lines {"image_id","category","box":[x0,y0,x1,y1],"score"}.
std::vector<ImagePredictions> load_predictions_jsonl(const std::string& path);

// Replays a scene's planted objects. With jitter > 0 each box edge moves by a
// seeded uniform offset in [-jitter, jitter]; the same seed always yields the
// same output.
class MockDetectorBackend final : public DetectorBackend {
 public:
  MockDetectorBackend(SceneSpec scene, double jitter = 0.0, std::uint64_t seed = 0);

  std::string name() const override { return "mock-scene"; }
  std::vector<VehicleDetection> detect(const cv::Mat& image) const override;

 private:
  SceneSpec scene_;
  double jitter_;
  std::uint64_t seed_;
};

std::unique_ptr<DetectorBackend> mock_backend_from_scene(const SceneSpec& scene, double jitter = 0.0,
                                                         std::uint64_t seed = 0);

/// Truth regions and image universe of one scene, keyed by image_id.
AnnotationSet annotations_from_scene(const std::string& image_id, const SceneSpec& scene);

}  // namespace platefind
