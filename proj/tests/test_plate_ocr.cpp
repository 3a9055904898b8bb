#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include <opencv2/imgproc.hpp>

#include "platefind/plate_ocr.hpp"
#include "platefind/synthetic.hpp"
#include "support.hpp"

using namespace platefind;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::InvalidArgument;
}

double agreement(const cv::Mat1b& a, const cv::Mat1b& b) {
  cv::Mat diff;
  cv::compare(a > 0, b > 0, diff, cv::CMP_NE);
  return 1.0 - static_cast<double>(cv::countNonZero(diff)) / static_cast<double>(a.total());
}

PlateRenderSpec clean_spec() {
  PlateRenderSpec spec;
  spec.perspective_jitter = 0;
  spec.max_blur_sigma = 0;
  spec.max_noise_sigma = 0;
  return spec;
}

// The classifier the acceptance run trains: 500 glyphs per class, seed 7.
const MlpCharClassifier& trained_model() {
  static const MlpCharClassifier model = [] {
    const auto samples = build_glyph_dataset(500, 7, training_plate_spec());
    return train_char_classifier(samples);
  }();
  return model;
}

std::vector<cv::Mat1f> prepared_glyphs(const cv::Mat& plate) {
  const Segmentation seg = segment_plate(binarize(plate));
  std::vector<cv::Mat1f> out;
  for (std::size_t i = 0; i < seg.boxes.size(); ++i) {
    const BoundingBox& b = seg.boxes[i].box;
    const cv::Rect r(static_cast<int>(b.x_min()), static_cast<int>(b.y_min()), static_cast<int>(b.width()),
                     static_cast<int>(b.height()));
    out.push_back(prepare_glyph(seg.labels(r) == seg.label_of[i]));
  }
  return out;
}

// Answers confidently for glyphs it has been shown and misreads anything
// else as 'Z' with low confidence.
class KeyedClassifier final : public CharClassifier {
 public:
  void teach(const cv::Mat1f& glyph, char label) { known_.emplace_back(glyph.clone(), label); }
  std::string name() const override { return "keyed"; }
  ClassDistribution predict(const cv::Mat1f& glyph) const override {
    ClassDistribution d;
    for (const auto& [g, label] : known_) {
      if (cv::norm(g, glyph, cv::NORM_INF) < 1e-6) {
        d.fill(0.01 / (kNumCharClasses - 1));
        d[static_cast<std::size_t>(char_class_index(label))] = 0.99;
        return d;
      }
    }
    d.fill(0.7 / (kNumCharClasses - 1));
    d[static_cast<std::size_t>(char_class_index('Z'))] = 0.3;
    return d;
  }

 private:
  std::vector<std::pair<cv::Mat1f, char>> known_;
};

}  // namespace

TEST_CASE("Otsu binarization basics") {
  const cv::Mat1b flat(40, 80, static_cast<uchar>(128));
  CHECK(otsu_threshold(flat) == -1);
  CHECK(cv::countNonZero(binarize(flat)) == 0);
  cv::Mat1b two(10, 10, static_cast<uchar>(200));
  two(cv::Rect(0, 0, 3, 10)) = 20;
  const int t = otsu_threshold(two);
  CHECK(t >= 20);
  CHECK(t < 200);
  const cv::Mat1b b = binarize(two);
  CHECK(cv::countNonZero(b) == 30);  // the minority side is foreground
  CHECK(b(0, 0) == 255);
}

TEST_CASE("binarized plates reproduce the generator's glyph mask, in either polarity") {
  std::mt19937_64 rng(4);
  PlateRenderSpec spec;
  for (int i = 0; i < 10; ++i) {
    const SyntheticPlate p = render_plate(random_plate_text(rng, 6, 10), spec, rng);
    CHECK(agreement(binarize(p.image), p.glyph_mask()) >= 0.95);
    cv::Mat1b inverted = 255 - p.image;
    CHECK(agreement(binarize(inverted), binarize(p.image)) == 1.0);
  }
  std::mt19937_64 clean_rng(5);
  for (int i = 0; i < 10; ++i) {
    const SyntheticPlate p = render_plate(random_plate_text(clean_rng, 6, 10), clean_spec(), clean_rng);
    CHECK(agreement(binarize(p.image), p.glyph_mask()) >= 0.99);
  }
}

TEST_CASE("segmentation of an empty raster throws") {
  CHECK(code_of([] { segment_characters(cv::Mat1b(80, 240, static_cast<uchar>(0))); }) ==
        ErrorCode::NoCharactersFound);
}

TEST_CASE("ten-glyph plates segment into ten ordered boxes") {
  std::mt19937_64 rng(8);
  PlateRenderSpec spec;
  spec.min_length = spec.max_length = 10;
  int checked = 0;
  for (int i = 0; i < 20; ++i) {
    const SyntheticPlate p = render_plate(random_plate_text(rng, 10, 10), spec, rng);
    const auto boxes = segment_characters(binarize(p.image));
    REQUIRE(boxes.size() == 10);
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      CHECK(boxes[k].order_index == static_cast<int>(k));
      CHECK(p.glyph_boxes[k].contains(boxes[k].box.center()));
      if (k > 0) CHECK(boxes[k].box.x_min() > boxes[k - 1].box.x_min());
    }
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("bolt-hole distractors are filtered out") {
  std::mt19937_64 rng(12);
  PlateRenderSpec spec;
  spec.distractors = 2;
  for (int i = 0; i < 10; ++i) {
    const SyntheticPlate p = render_plate(random_plate_text(rng, 6, 10), spec, rng);
    REQUIRE(p.distractor_boxes.size() == 2);
    const auto boxes = segment_characters(binarize(p.image));
    CHECK(boxes.size() == p.text.size());
    for (const CharBox& b : boxes)
      for (const BoundingBox& d : p.distractor_boxes) CHECK_FALSE(d.contains(b.box.center()));
  }
}

TEST_CASE("segmentation ignores polarity") {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 10; ++i) {
    const SyntheticPlate p = render_plate(random_plate_text(rng, 6, 10), PlateRenderSpec{}, rng);
    CHECK(segment_characters(binarize(p.image)) == segment_characters(binarize(255 - p.image)));
  }
}

TEST_CASE("prepared glyphs are 32x32 in [0,1]") {
  cv::Mat1b bar(60, 8, static_cast<uchar>(255));
  const cv::Mat1f g = prepare_glyph(bar);
  CHECK(g.rows == kGlyphSize);
  CHECK(g.cols == kGlyphSize);
  double lo, hi;
  cv::minMaxLoc(g, &lo, &hi);
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(hi > 0.5);
  // 2 px margin top and bottom.
  CHECK(cv::countNonZero(g.row(0)) == 0);
  CHECK(cv::countNonZero(g.row(31)) == 0);
}

TEST_CASE("uniform classifier and distribution checks") {
  const UniformClassifier uniform;
  const CharPrediction p = classify_character(cv::Mat1b(20, 10, static_cast<uchar>(0)), uniform);
  CHECK(p.confidence == doctest::Approx(1.0 / 36));
  REQUIRE(p.alternates.size() == 36);
  double sum = 0;
  for (const auto& [c, v] : p.alternates) {
    CHECK(v == doctest::Approx(1.0 / 36));
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  ClassDistribution bad{};
  bad[0] = 0.5;
  CHECK(code_of([&] { prediction_from_distribution(bad); }) == ErrorCode::ModelFailure);
  bad[1] = 0.6;
  bad[2] = -0.1;
  CHECK(code_of([&] { prediction_from_distribution(bad); }) == ErrorCode::ModelFailure);
}

TEST_CASE("glyph similarity") {
  cv::Mat1f a(32, 32, 0.0f);
  a(cv::Rect(8, 4, 6, 24)) = 1.0f;
  CHECK(glyph_similarity(a, a) == doctest::Approx(1.0));
  CHECK(glyph_similarity(a, 1.0f - a) == doctest::Approx(-1.0));
  CHECK(glyph_similarity(a, cv::Mat1f(32, 32, 0.5f)) == 0.0);
}

TEST_CASE("training needs every class") {
  auto samples = build_glyph_dataset(12, 3, training_plate_spec());
  std::erase_if(samples, [](const GlyphSample& s) { return s.label == char_class_index('Q'); });
  CHECK(code_of([&] { train_char_classifier(samples); }) == ErrorCode::InsufficientData);
}

TEST_CASE("plate generator is deterministic and samples classes uniformly") {
  const auto a = generate_synthetic_plates(5, 42, training_plate_spec());
  const auto b = generate_synthetic_plates(5, 42, training_plate_spec());
  for (int i = 0; i < 5; ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(cv::norm(a[i].image, b[i].image, cv::NORM_INF) == 0.0);
  }
  std::mt19937_64 rng(36000);
  std::map<char, int> counts;
  int total = 0;
  while (total < 36000) {
    for (char c : random_plate_text(rng, 6, 10)) {
      if (total == 36000) break;
      ++counts[c];
      ++total;
    }
  }
  REQUIRE(counts.size() == 36);
  for (const auto& [c, n] : counts) CHECK_MESSAGE(n >= 900, c);
}

TEST_CASE("trained classifier: held-out accuracy, confident sevens, serialization") {
  const MlpCharClassifier& model = trained_model();
  const auto held_out = build_glyph_dataset(60, 99, training_plate_spec());
  CHECK(classifier_accuracy(model, held_out) >= 0.90);

  int sevens = 0, confident = 0;
  for (const GlyphSample& s : held_out) {
    if (s.label != char_class_index('7')) continue;
    ++sevens;
    const CharPrediction p = prediction_from_distribution(model.predict(s.glyph));
    if (p.ch == '7' && p.confidence > 0.9) ++confident;
  }
  REQUIRE(sevens >= 60);
  CHECK(static_cast<double>(confident) / sevens >= 0.90);

  testing_support::TempDir dir;
  model.save((dir / "ocr.model").string());
  const MlpCharClassifier back = MlpCharClassifier::load((dir / "ocr.model").string());
  for (int i = 0; i < 100; ++i) {
    const ClassDistribution x = model.predict(held_out[i].glyph);
    const ClassDistribution y = back.predict(held_out[i].glyph);
    for (int k = 0; k < kNumCharClasses; ++k) CHECK(std::abs(x[k] - y[k]) < 1e-6);
  }
  testing_support::write_file(dir / "junk.model", "not a model");
  CHECK(code_of([&] { MlpCharClassifier::load((dir / "junk.model").string()); }) == ErrorCode::ModelFailure);
}

TEST_CASE("training is deterministic for a seed") {
  const auto samples = build_glyph_dataset(15, 5, training_plate_spec());
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.hidden = 16;
  const auto a = train_char_classifier(samples, cfg);
  const auto b = train_char_classifier(samples, cfg);
  for (int i = 0; i < 20; ++i) CHECK(a.predict(samples[i].glyph) == b.predict(samples[i].glyph));
}

TEST_CASE("read_plate on rendered plates") {
  const MlpCharClassifier& model = trained_model();
  std::mt19937_64 rng(2024);
  const SyntheticPlate p = render_plate("MH12NE8922", PlateRenderSpec{}, rng);
  const PlateReading r = read_plate(p.image, model);
  CHECK(r.text.str() == "MH12NE8922");
  REQUIRE(r.chars.size() == r.text.size());
  double log_sum = 0;
  for (std::size_t i = 0; i < r.chars.size(); ++i) {
    CHECK(r.chars[i].prediction.ch == r.text[i]);
    if (i > 0) CHECK(r.chars[i].box.box.x_min() > r.chars[i - 1].box.box.x_min());
    double sum = 0;
    for (const auto& [c, v] : r.chars[i].prediction.alternates) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    log_sum += std::log(r.chars[i].prediction.confidence);
  }
  CHECK(r.plate_confidence == doctest::Approx(std::exp(log_sum / r.chars.size())));
  // Identical input, identical reading.
  CHECK(read_plate(p.image, model) == r);
}

TEST_CASE("adaptive pass is a no-op when every character is confident") {
  std::mt19937_64 rng(31);
  const SyntheticPlate p = render_plate("KA01MJ2022", clean_spec(), rng);
  KeyedClassifier keyed;
  const auto glyphs = prepared_glyphs(p.image);
  REQUIRE(glyphs.size() == 10);
  for (std::size_t i = 0; i < glyphs.size(); ++i) keyed.teach(glyphs[i], p.text[i]);
  const PlateReading r = read_plate(p.image, keyed);
  CHECK(r.text.str() == "KA01MJ2022");
  for (const PlateChar& c : r.chars) CHECK_FALSE(c.adapted);
}

TEST_CASE("one blurred glyph is revised by the plate's own templates") {
  std::mt19937_64 rng(31);
  PlateRenderSpec spec = clean_spec();
  spec.degraded_glyph = 9;
  spec.degraded_blur_sigma = 2.0;
  const SyntheticPlate p = render_plate("MH12NE8922", spec, rng);
  const auto glyphs = prepared_glyphs(p.image);
  REQUIRE(glyphs.size() == 10);
  KeyedClassifier keyed;
  for (std::size_t i = 0; i < 9; ++i) keyed.teach(glyphs[i], p.text[i]);

  const PlateReading r = read_plate(p.image, keyed);
  int below = 0, adapted = 0;
  for (const PlateChar& c : r.chars) adapted += c.adapted;
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    below += prediction_from_distribution(keyed.predict(glyphs[i])).confidence < OcrConfig{}.adapt_threshold;
  }
  CHECK(below == 1);
  CHECK(adapted == 1);
  CHECK(r.chars[9].adapted);
  CHECK(r.text.str() == "MH12NE8922");

  SUBCASE("threshold 0 disables the pass") {
    OcrConfig off;
    off.adapt_threshold = 0.0;
    const PlateReading plain = read_plate(p.image, keyed, off);
    for (const PlateChar& c : plain.chars) CHECK_FALSE(c.adapted);
    CHECK(plain.text.str() == "MH12NE892Z");
  }
  SUBCASE("raising the threshold never touches characters above it") {
    for (double t : {0.3, 0.5, 0.9, 0.995}) {
      OcrConfig cfg;
      cfg.adapt_threshold = t;
      const PlateReading again = read_plate(p.image, keyed, cfg);
      for (std::size_t i = 0; i < 9; ++i) {
        if (r.chars[i].prediction.confidence > t) CHECK(again.chars[i].prediction == r.chars[i].prediction);
      }
    }
  }
}

TEST_CASE("read_plate errors") {
  const UniformClassifier uniform;
  CHECK(code_of([&] { read_plate(cv::Mat1b(80, 240, static_cast<uchar>(255)), uniform); }) ==
        ErrorCode::NoCharactersFound);
  OcrConfig bad;
  bad.adapt_threshold = 1.5;
  CHECK(code_of([&] { read_plate(cv::Mat1b(80, 240, static_cast<uchar>(255)), uniform, bad); }) ==
        ErrorCode::InvalidArgument);
}
