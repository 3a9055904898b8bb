#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include "platefind/model.hpp"
#include "platefind/plate_ocr.hpp"
#include "platefind/scene.hpp"

namespace platefind {

struct PlateRenderSpec {
  int width = 240;
  int height = 80;
  int min_length = 6;
  int max_length = 10;
  double max_glyph_height = 0.62;   // fraction of plate height
  double condense = 0.7;            // horizontal squeeze of the font
  double perspective_jitter = 0.0;  // max corner displacement, fraction of plate height
  double max_blur_sigma = 0.0;
  double max_noise_sigma = 0.0;
  double invert_probability = 0.0;
  int distractors = 0;              // bolt-hole blobs of height 0.1 * plate height
  int degraded_glyph = -1;          // index of one glyph to blur heavily, -1 for none
  double degraded_blur_sigma = 3.0;
};

struct SyntheticPlate {
  cv::Mat1b image;
  std::string text;
  std::vector<BoundingBox> glyph_boxes;  // in text order
  cv::Mat1b glyph_labels;                // 0 background, i + 1 for glyph i
  std::vector<BoundingBox> distractor_boxes;
  bool inverted = false;

  /// 255 wherever glyph_labels is non-zero.
  cv::Mat1b glyph_mask() const;
};

/// Uniformly random characters, length uniform in [min_length, max_length].
std::string random_plate_text(std::mt19937_64& rng, int min_length, int max_length);

/// Renders `text` with the spec's layout, noise and jitter drawn from rng.
SyntheticPlate render_plate(const std::string& text, const PlateRenderSpec& spec, std::mt19937_64& rng);

// Deterministic stream of random plates for a seed.
class PlateGenerator {
 public:
  PlateGenerator(std::uint64_t seed, PlateRenderSpec spec) : rng_(seed), spec_(spec) {}
  SyntheticPlate next();

 private:
  std::mt19937_64 rng_;
  PlateRenderSpec spec_;
};

std::vector<SyntheticPlate> generate_synthetic_plates(int count, std::uint64_t seed, const PlateRenderSpec& spec);

/// Plate spec used for OCR training and the held-out evaluations.
PlateRenderSpec training_plate_spec();

/// Glyphs cut from generated plates through the same binarize/segment path
/// read_plate uses. Plates whose segment count differs from their text length
/// are skipped. Stops once every class has at least min_per_class samples.
std::vector<GlyphSample> build_glyph_dataset(int min_per_class, std::uint64_t seed, const PlateRenderSpec& spec,
                                             const SegmentationConfig& segmentation = {});

struct SizeRange {
  double min_w, max_w, min_h, max_h;
};
SizeRange vehicle_size_range(VehicleCategory category);

struct SceneRenderSpec {
  int width = 1280;
  int height = 720;
  int min_vehicles = 1;
  int max_vehicles = 3;
  double plate_probability = 1.0;  // otherwise the plate is left off (occluded)
  double plate_corner_jitter = 4.0;  // px
  double background_noise = 3.0;
};

struct SyntheticScene {
  cv::Mat3b image;
  SceneSpec spec;
  std::vector<Eigen::Matrix3d> plate_warps;  // flat plate -> image, per object (identity if no plate)
};

SyntheticScene generate_scene(std::uint64_t seed, const SceneRenderSpec& spec = {});

}  // namespace platefind
