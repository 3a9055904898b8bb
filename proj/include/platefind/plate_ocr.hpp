#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include "platefind/model.hpp"

namespace platefind {

struct RectifiedPlate;

/// Luminance for colour input; 8-bit single channel passes through.
cv::Mat1b to_gray(const cv::Mat& image);

/// Otsu threshold t: the split {<= t} / {> t} maximizing between-class
/// variance. Returns -1 for an image with a single grey level.
int otsu_threshold(const cv::Mat1b& gray);

/// Foreground (255) is the minority side of the Otsu split; a single-level
/// image is all background.
cv::Mat1b binarize(const cv::Mat& plate);

struct CharBox {
  BoundingBox box;
  int order_index = 0;

  friend bool operator==(const CharBox&, const CharBox&) = default;
};

struct SegmentationConfig {
  double min_height = 0.30;  // fraction of plate height
  double max_height = 0.95;
  double min_aspect = 0.8;   // component height / width
  double max_aspect = 16.0;  // a thin "I" after rectification can exceed 10
  // Blobs touching the raster edge are plate frame or vehicle body left in by
  // a loose quad, not characters.
  bool drop_border_touching = true;
};

// Segmentation result that also keeps the component labels so glyph crops
// can exclude pixels of neighbouring characters.
struct Segmentation {
  std::vector<CharBox> boxes;
  cv::Mat1i labels;         // 0 = background, otherwise component id
  std::vector<int> label_of;  // component id for boxes[i]
};

/// 8-connected components, size/aspect filter, single text line, left to right.
/// Throws NoCharactersFound when nothing survives.
Segmentation segment_plate(const cv::Mat1b& binary, const SegmentationConfig& config = {});
std::vector<CharBox> segment_characters(const cv::Mat1b& binary, const SegmentationConfig& config = {});

inline constexpr int kGlyphSize = 32;

/// Letterboxes a glyph crop (foreground non-zero) into a 32x32 float raster in
/// [0,1], aspect preserved and centred with a 2 px margin.
cv::Mat1f prepare_glyph(const cv::Mat& glyph);

using ClassDistribution = std::array<double, kNumCharClasses>;

class CharClassifier {
 public:
  virtual ~CharClassifier() = default;
  virtual std::string name() const = 0;
  virtual bool concurrent_safe() const { return true; }
  /// Distribution over kPlateAlphabet order for a prepared 32x32 glyph.
  virtual ClassDistribution predict(const cv::Mat1f& glyph) const = 0;
};

struct CharPrediction {
  char ch = '0';
  double confidence = 0.0;
  std::vector<std::pair<char, double>> alternates;  // all 36 classes, descending

  friend bool operator==(const CharPrediction&, const CharPrediction&) = default;
};

/// Orders a distribution into a CharPrediction. Throws ModelFailure unless it
/// is non-negative and sums to 1 within 1e-6.
CharPrediction prediction_from_distribution(const ClassDistribution& dist);

/// prepare_glyph + model. Model exceptions surface as ModelFailure.
CharPrediction classify_character(const cv::Mat& glyph, const CharClassifier& model);

struct PlateChar {
  CharBox box;
  CharPrediction prediction;
  bool adapted = false;

  friend bool operator==(const PlateChar&, const PlateChar&) = default;
};

struct PlateReading {
  PlateString text;
  std::vector<PlateChar> chars;
  double plate_confidence = 0.0;  // geometric mean of character confidences

  friend bool operator==(const PlateReading&, const PlateReading&) = default;
};

struct OcrConfig {
  SegmentationConfig segmentation;
  double adapt_threshold = 0.6;
  double adapt_margin = 0.1;
};

/// Binarize, segment, classify, then re-score characters below
/// adapt_threshold against templates built from this plate's confident
/// characters. Throws NoCharactersFound.
PlateReading read_plate(const cv::Mat& plate_image, const CharClassifier& model, const OcrConfig& config = {});
PlateReading read_plate(const RectifiedPlate& plate, const CharClassifier& model, const OcrConfig& config = {});

/// Pearson correlation of two prepared glyphs; 0 when either is constant.
double glyph_similarity(const cv::Mat1f& a, const cv::Mat1f& b);

// Returns 1/36 for every class.
class UniformClassifier final : public CharClassifier {
 public:
  std::string name() const override { return "uniform"; }
  ClassDistribution predict(const cv::Mat1f&) const override;
};

struct GlyphSample {
  cv::Mat1f glyph;  // prepared 32x32
  int label = 0;    // index into kPlateAlphabet
};

struct TrainingConfig {
  int hidden = 128;
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 7;
};

// One-hidden-layer ReLU network over the 1024 glyph pixels with a softmax head.
class MlpCharClassifier final : public CharClassifier {
 public:
  MlpCharClassifier(Eigen::MatrixXf w1, Eigen::VectorXf b1, Eigen::MatrixXf w2, Eigen::VectorXf b2);

  std::string name() const override { return "mlp-" + std::to_string(w1_.rows()); }
  ClassDistribution predict(const cv::Mat1f& glyph) const override;

  /// Single-file artifact: magic line, JSON descriptor line (architecture and
  /// label order), then little-endian float32 weights.
  void save(const std::string& path) const;
  static MlpCharClassifier load(const std::string& path);

  int hidden_units() const noexcept { return static_cast<int>(w1_.rows()); }

 private:
  Eigen::MatrixXf w1_;  // hidden x 1024
  Eigen::VectorXf b1_;
  Eigen::MatrixXf w2_;  // 36 x hidden
  Eigen::VectorXf b2_;
};

/// Deterministic for a fixed seed. Throws InsufficientData if any class has
/// fewer than 10 samples.
MlpCharClassifier train_char_classifier(const std::vector<GlyphSample>& samples, const TrainingConfig& config = {});

/// Fraction of samples whose top-1 class matches the label.
double classifier_accuracy(const CharClassifier& model, const std::vector<GlyphSample>& samples);

}  // namespace platefind
