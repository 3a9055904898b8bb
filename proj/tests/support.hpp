#pragma once
// Fixtures shared by the test binaries.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "platefind/model.hpp"
#include "platefind/plate_ocr.hpp"
#include "platefind/record.hpp"
#include "platefind/scene.hpp"
#include "platefind/synthetic.hpp"
#include "platefind/vehicle_detection.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pf") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
}

/// A plate reading whose characters all have confidence 1.
inline platefind::PlateReading certain_reading(const std::string& text) {
  platefind::PlateReading reading{platefind::PlateString(text), {}, 1.0};
  for (std::size_t i = 0; i < text.size(); ++i) {
    platefind::PlateChar c;
    c.box = {platefind::BoundingBox(10.0 * i, 0, 10.0 * i + 8, 20), static_cast<int>(i)};
    c.prediction.ch = text[i];
    c.prediction.confidence = 1.0;
    c.prediction.alternates.emplace_back(text[i], 1.0);
    reading.chars.push_back(c);
  }
  return reading;
}

/// A valid record with a plate when `plate` is non-empty.
inline platefind::VehicleRecord make_record(const std::string& image_id, platefind::VehicleCategory category,
                                            const std::string& plate, double score = 0.9, double x = 100) {
  using namespace platefind;
  VehicleRecord r;
  r.image_id = image_id;
  r.source_path = "/data/" + image_id;
  r.ingested_at = Timestamp(std::chrono::milliseconds(1760000000123));
  r.category = category;
  r.box = BoundingBox(x, 50, x + 200, 250);
  r.detection_score = score;
  r.record_id = make_record_id(image_id, r.box, category);
  if (!plate.empty()) {
    r.plate_quad = Quadrilateral({Point{x + 60, 200}, Point{x + 140, 200}, Point{x + 140, 226}, Point{x + 60, 226}});
    r.plate_reading = certain_reading(plate);
  }
  return r;
}

/// Classifier trained once per process on a modest synthetic set; enough
/// for pipeline tests, not the accuracy bar the acceptance run checks.
inline std::shared_ptr<const platefind::MlpCharClassifier> quick_classifier() {
  static const std::shared_ptr<const platefind::MlpCharClassifier> model = [] {
    const auto samples = platefind::build_glyph_dataset(200, 7, platefind::training_plate_spec());
    platefind::TrainingConfig cfg;
    cfg.epochs = 10;
    return std::make_shared<const platefind::MlpCharClassifier>(platefind::train_char_classifier(samples, cfg));
  }();
  return model;
}

/// Writes <dir>/<name>.png and its .scene.json sidecar; returns the scene.
inline platefind::SyntheticScene write_scene(const fs::path& dir, const std::string& name, std::uint64_t seed,
                                             const platefind::SceneRenderSpec& spec = {}) {
  platefind::SyntheticScene scene = platefind::generate_scene(seed, spec);
  cv::imwrite((dir / (name + ".png")).string(), scene.image);
  write_file(dir / (name + ".scene.json"), platefind::scene_to_json(scene.spec).dump());
  return scene;
}

// One image, seven 4-wheeler truths; five are predicted exactly and three
// predictions land on empty road: TP=5, FP=3, FN=2.
struct F1Fixture {
  platefind::AnnotationSet truth;
  std::vector<platefind::ImagePredictions> predictions;
};

inline F1Fixture f1_fixture() {
  using namespace platefind;
  F1Fixture f;
  f.truth.image_ids = {"fixture.jpg"};
  ImagePredictions p{"fixture.jpg", {}};
  for (int i = 0; i < 7; ++i) {
    const BoundingBox box(10 + 120.0 * i, 10, 110 + 120.0 * i, 90);
    f.truth.regions.push_back({"fixture.jpg", VehicleCategory::FourWheeler, box});
    if (i < 5) p.detections.push_back({VehicleCategory::FourWheeler, box, filled_mask(box), 0.9 - 0.01 * i});
  }
  for (int i = 0; i < 3; ++i) {
    const BoundingBox box(10 + 120.0 * i, 400, 110 + 120.0 * i, 480);
    p.detections.push_back({VehicleCategory::FourWheeler, box, filled_mask(box), 0.5});
  }
  f.predictions.push_back(std::move(p));
  return f;
}

/// The fixture as files the CLI reads: VIA annotations and prediction lines.
inline void write_f1_fixture(const fs::path& annotations, const fs::path& predictions) {
  const F1Fixture f = f1_fixture();
  write_file(annotations, platefind::annotations_to_via_json(f.truth));
  std::ofstream out(predictions);
  for (const auto& d : f.predictions[0].detections) {
    out << nlohmann::json{{"image_id", "fixture.jpg"},
                          {"category", std::string(platefind::canonical_label(d.category))},
                          {"box", {d.box.x_min(), d.box.y_min(), d.box.x_max(), d.box.y_max()}},
                          {"score", d.score}}
               .dump()
        << "\n";
  }
}

}  // namespace testing_support
