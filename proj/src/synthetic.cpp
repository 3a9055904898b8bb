#include "platefind/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

namespace platefind {

namespace {

// Ink coverage in [0,1] for each class, tightly cropped, rendered once at a
// large size and resized per plate.
const std::array<cv::Mat1f, kNumCharClasses>& glyph_atlas() {
  static const std::array<cv::Mat1f, kNumCharClasses> atlas = [] {
    std::array<cv::Mat1f, kNumCharClasses> out;
    for (int i = 0; i < kNumCharClasses; ++i) {
      cv::Mat1b canvas(220, 220, static_cast<uchar>(0));
      const std::string s(1, kPlateAlphabet[static_cast<std::size_t>(i)]);
      cv::putText(canvas, s, {40, 170}, cv::FONT_HERSHEY_SIMPLEX, 4.0, cv::Scalar(255), 10, cv::LINE_AA);
      const cv::Rect ink = cv::boundingRect(canvas > 0);
      canvas(ink).convertTo(out[static_cast<std::size_t>(i)], CV_32F, 1.0 / 255.0);
    }
    return out;
  }();
  return atlas;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::vector<BoundingBox> boxes_from_labels(const cv::Mat1b& labels, int count) {
  std::vector<int> x0(static_cast<std::size_t>(count), labels.cols), y0(static_cast<std::size_t>(count), labels.rows);
  std::vector<int> x1(static_cast<std::size_t>(count), -1), y1(static_cast<std::size_t>(count), -1);
  for (int y = 0; y < labels.rows; ++y) {
    for (int x = 0; x < labels.cols; ++x) {
      const int l = labels(y, x);
      if (l == 0 || l > count) continue;
      const auto k = static_cast<std::size_t>(l - 1);
      x0[k] = std::min(x0[k], x);
      y0[k] = std::min(y0[k], y);
      x1[k] = std::max(x1[k], x);
      y1[k] = std::max(y1[k], y);
    }
  }
  std::vector<BoundingBox> out;
  for (std::size_t k = 0; k < static_cast<std::size_t>(count); ++k) {
    if (x1[k] < 0) {
      out.emplace_back(0, 0, 1, 1);
    } else {
      out.emplace_back(x0[k], y0[k], x1[k] + 1, y1[k] + 1);
    }
  }
  return out;
}

}  // namespace

cv::Mat1b SyntheticPlate::glyph_mask() const {
  cv::Mat1b m = glyph_labels > 0;
  return m;
}

std::string random_plate_text(std::mt19937_64& rng, int min_length, int max_length) {
  const int len = std::uniform_int_distribution<int>(min_length, max_length)(rng);
  std::uniform_int_distribution<int> cls(0, kNumCharClasses - 1);
  std::string text;
  for (int i = 0; i < len; ++i) text.push_back(kPlateAlphabet[static_cast<std::size_t>(cls(rng))]);
  return text;
}

SyntheticPlate render_plate(const std::string& text, const PlateRenderSpec& spec, std::mt19937_64& rng) {
  if (text.empty()) throw Error(ErrorCode::EmptyPlate, "cannot render an empty plate");
  const auto& atlas = glyph_atlas();
  const int W = spec.width, H = spec.height;
  const double background = uniform(rng, 215, 250);
  const double ink = uniform(rng, 10, 50);

  std::vector<const cv::Mat1f*> glyphs;
  for (char c : text) {
    const int idx = char_class_index(c);
    if (idx < 0) throw Error(ErrorCode::InvalidArgument, "cannot render character '" + std::string(1, c) + "'");
    glyphs.push_back(&atlas[static_cast<std::size_t>(idx)]);
  }

  double gh = spec.max_glyph_height * H * uniform(rng, 0.85, 1.0);
  auto layout_width = [&](double h) {
    double total = 0;
    for (const cv::Mat1f* g : glyphs) total += g->cols * (h / g->rows) * spec.condense;
    return total + 0.14 * h * static_cast<double>(glyphs.size() - 1);
  };
  const double max_w = 0.92 * W;
  if (layout_width(gh) > max_w) gh *= max_w / layout_width(gh);

  cv::Mat1f canvas(H, W, static_cast<float>(background));
  SyntheticPlate plate;
  plate.text = text;
  plate.glyph_labels = cv::Mat1b(H, W, static_cast<uchar>(0));

  const double total = layout_width(gh);
  double x = std::max(1.0, (W - total) / 2 + uniform(rng, -3, 3));
  const int top = static_cast<int>(std::lround((H - gh) / 2 + uniform(rng, -3, 3)));
  const int gh_px = std::max(1, static_cast<int>(std::lround(gh)));
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    const cv::Mat1f& g = *glyphs[i];
    const int w_px = std::max(1, static_cast<int>(std::lround(g.cols * (gh / g.rows) * spec.condense)));
    cv::Mat1f cov;
    cv::resize(g, cov, cv::Size(w_px, gh_px), 0, 0, cv::INTER_AREA);
    const int x0 = static_cast<int>(std::lround(x));
    for (int yy = 0; yy < gh_px; ++yy) {
      const int py = top + yy;
      if (py < 0 || py >= H) continue;
      for (int xx = 0; xx < w_px; ++xx) {
        const int px = x0 + xx;
        if (px < 0 || px >= W) continue;
        const float c = std::clamp(cov(yy, xx), 0.0f, 1.0f);
        canvas(py, px) = static_cast<float>(background - (background - ink) * c);
        if (c >= 0.5f) plate.glyph_labels(py, px) = static_cast<uchar>(i + 1);
      }
    }
    x += w_px + 0.14 * gh;
  }

  for (int d = 0; d < spec.distractors; ++d) {
    const double radius = 0.05 * H;
    const double cx = (d % 2 == 0) ? 0.035 * W : 0.965 * W;
    const double cy = (d / 2 % 2 == 0) ? 0.1 * H : 0.9 * H;
    cv::circle(canvas, cv::Point(static_cast<int>(cx), static_cast<int>(cy)), static_cast<int>(radius),
               cv::Scalar(ink), cv::FILLED, cv::LINE_8);
    plate.distractor_boxes.emplace_back(cx - radius, cy - radius, cx + radius + 1, cy + radius + 1);
  }

  if (spec.perspective_jitter > 0) {
    const double j = spec.perspective_jitter * H;
    const std::array<cv::Point2f, 4> from = {cv::Point2f(0, 0), cv::Point2f(W, 0), cv::Point2f(W, H), cv::Point2f(0, H)};
    std::array<cv::Point2f, 4> to;
    for (std::size_t k = 0; k < 4; ++k) {
      to[k] = from[k] + cv::Point2f(static_cast<float>(uniform(rng, -j, j)), static_cast<float>(uniform(rng, -j, j)));
    }
    const cv::Mat g = cv::getPerspectiveTransform(from.data(), to.data());
    cv::Mat1f warped;
    cv::warpPerspective(canvas, warped, g, canvas.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(background));
    canvas = warped;
    cv::Mat1b labels;
    cv::warpPerspective(plate.glyph_labels, labels, g, canvas.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar(0));
    plate.glyph_labels = labels;
  }

  if (spec.degraded_glyph >= 0 && spec.degraded_glyph < static_cast<int>(text.size())) {
    const auto boxes = boxes_from_labels(plate.glyph_labels, static_cast<int>(text.size()));
    const cv::Rect r = cv::Rect(static_cast<int>(boxes[static_cast<std::size_t>(spec.degraded_glyph)].x_min()) - 2,
                                static_cast<int>(boxes[static_cast<std::size_t>(spec.degraded_glyph)].y_min()) - 2,
                                static_cast<int>(boxes[static_cast<std::size_t>(spec.degraded_glyph)].width()) + 4,
                                static_cast<int>(boxes[static_cast<std::size_t>(spec.degraded_glyph)].height()) + 4) &
                       cv::Rect(0, 0, W, H);
    cv::Mat1f blurred;
    cv::GaussianBlur(canvas, blurred, cv::Size(0, 0), spec.degraded_blur_sigma);
    blurred(r).copyTo(canvas(r));
  }

  if (spec.max_blur_sigma > 0) {
    const double sigma = uniform(rng, 0, spec.max_blur_sigma);
    if (sigma > 0.3) cv::GaussianBlur(canvas, canvas, cv::Size(0, 0), sigma);
  }
  if (spec.max_noise_sigma > 0) {
    const double sigma = uniform(rng, 0, spec.max_noise_sigma);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(sigma));
    for (int yy = 0; yy < H; ++yy) {
      for (int xx = 0; xx < W; ++xx) canvas(yy, xx) += noise(rng);
    }
  }
  plate.inverted = spec.invert_probability > 0 && uniform(rng, 0, 1) < spec.invert_probability;

  canvas.convertTo(plate.image, CV_8U);  // rounds and saturates
  if (plate.inverted) plate.image = 255 - plate.image;
  plate.glyph_boxes = boxes_from_labels(plate.glyph_labels, static_cast<int>(text.size()));
  return plate;
}

SyntheticPlate PlateGenerator::next() {
  const std::string text = random_plate_text(rng_, spec_.min_length, spec_.max_length);
  return render_plate(text, spec_, rng_);
}

std::vector<SyntheticPlate> generate_synthetic_plates(int count, std::uint64_t seed, const PlateRenderSpec& spec) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "count must be at least 1");
  PlateGenerator gen(seed, spec);
  std::vector<SyntheticPlate> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(gen.next());
  return out;
}

PlateRenderSpec training_plate_spec() {
  PlateRenderSpec spec;
  spec.perspective_jitter = 0.04;
  spec.max_blur_sigma = 1.0;
  spec.max_noise_sigma = 6.0;
  spec.invert_probability = 0.1;
  return spec;
}

std::vector<GlyphSample> build_glyph_dataset(int min_per_class, std::uint64_t seed, const PlateRenderSpec& spec,
                                             const SegmentationConfig& segmentation) {
  PlateGenerator gen(seed, spec);
  std::vector<GlyphSample> out;
  std::array<int, kNumCharClasses> counts{};
  auto done = [&] { return std::all_of(counts.begin(), counts.end(), [&](int c) { return c >= min_per_class; }); };
  const long max_plates = 200L + 40L * min_per_class * kNumCharClasses / std::max(1, spec.min_length * 4);
  for (long p = 0; p < max_plates && !done(); ++p) {
    const SyntheticPlate plate = gen.next();
    Segmentation seg;
    try {
      seg = segment_plate(binarize(plate.image), segmentation);
    } catch (const Error&) {
      continue;
    }
    if (seg.boxes.size() != plate.text.size()) continue;
    for (std::size_t i = 0; i < seg.boxes.size(); ++i) {
      const BoundingBox& b = seg.boxes[i].box;
      const cv::Rect r(static_cast<int>(b.x_min()), static_cast<int>(b.y_min()), static_cast<int>(b.width()),
                       static_cast<int>(b.height()));
      const cv::Mat1b glyph = (seg.labels(r) == seg.label_of[i]);
      const int label = char_class_index(plate.text[i]);
      out.push_back({prepare_glyph(glyph), label});
      ++counts[static_cast<std::size_t>(label)];
    }
  }
  return out;
}

SizeRange vehicle_size_range(VehicleCategory category) {
  switch (category) {
    case VehicleCategory::TwoWheeler: return {230, 260, 300, 360};
    case VehicleCategory::ThreeWheeler: return {280, 320, 260, 300};
    case VehicleCategory::FourWheeler: return {360, 420, 200, 250};
    case VehicleCategory::GtFourWheeler: return {440, 500, 320, 380};
  }
  return {300, 300, 300, 300};
}

namespace {

cv::Scalar body_colour(std::mt19937_64& rng) {
  // Saturated enough to stand off the grey road and dark enough to keep
  // white plates the brightest thing on the vehicle.
  static const std::array<cv::Scalar, 8> palette = {
      cv::Scalar(40, 40, 190),  cv::Scalar(180, 60, 30), cv::Scalar(40, 160, 40),  cv::Scalar(30, 170, 190),
      cv::Scalar(150, 40, 150), cv::Scalar(20, 90, 180), cv::Scalar(170, 150, 40), cv::Scalar(45, 45, 45)};
  return palette[std::uniform_int_distribution<std::size_t>(0, palette.size() - 1)(rng)];
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneRenderSpec& spec) {
  std::mt19937_64 rng(seed);
  SyntheticScene scene;
  scene.spec.width = spec.width;
  scene.spec.height = spec.height;
  scene.image = cv::Mat3b(spec.height, spec.width, cv::Vec3b(100, 100, 100));
  // cv::randn draws from OpenCV's thread-local RNG; seed it from ours.
  cv::theRNG().state = rng();
  if (spec.background_noise > 0) {
    cv::Mat noise(scene.image.size(), CV_16SC3);
    cv::randn(noise, cv::Scalar::all(0), cv::Scalar::all(spec.background_noise));
    cv::Mat img16;
    scene.image.convertTo(img16, CV_16SC3);
    img16 += noise;
    img16.convertTo(scene.image, CV_8UC3);
  }

  const int wanted = std::uniform_int_distribution<int>(spec.min_vehicles, spec.max_vehicles)(rng);
  double cursor = uniform(rng, 10, 60);
  PlateRenderSpec flat;  // clean plate, warped into the scene below
  for (int v = 0; v < wanted; ++v) {
    const auto category = kAllCategories[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
    const SizeRange range = vehicle_size_range(category);
    const double bw = uniform(rng, range.min_w, range.max_w);
    const double bh = uniform(rng, range.min_h, range.max_h);
    const double wheel = 0.12 * bh;
    if (cursor + bw + 10 > spec.width) break;
    const double bx = cursor;
    const double by = uniform(rng, 20, std::max(21.0, spec.height - bh - wheel - 20));
    cursor += bw + uniform(rng, 20, 80);

    const cv::Scalar colour = body_colour(rng);
    cv::rectangle(scene.image, cv::Rect(cv::Point2d(bx, by), cv::Point2d(bx + bw, by + bh)), colour, cv::FILLED);
    cv::rectangle(scene.image, cv::Rect(cv::Point2d(bx + 0.15 * bw, by + 0.08 * bh), cv::Point2d(bx + 0.85 * bw, by + 0.35 * bh)),
                  cv::Scalar(60, 40, 30), cv::FILLED);
    for (double wx : {bx + 0.2 * bw, bx + 0.8 * bw}) {
      cv::circle(scene.image, cv::Point2d(wx, by + bh), static_cast<int>(wheel), cv::Scalar(20, 20, 20), cv::FILLED);
    }

    PlantedObject object;
    object.category = category;
    object.box = BoundingBox(std::floor(bx), std::floor(by), std::ceil(bx + bw) + 1, std::ceil(by + bh + wheel) + 1)
                     .clipped(spec.width, spec.height)
                     .value();
    object.score = uniform(rng, 0.75, 0.99);

    Eigen::Matrix3d warp = Eigen::Matrix3d::Identity();
    const std::string text = random_plate_text(rng, 6, 10);
    if (uniform(rng, 0, 1) < spec.plate_probability) {
      const SyntheticPlate plate = render_plate(text, flat, rng);
      const double pw = std::min(0.8 * bw, uniform(rng, 200, 235));
      const double ph = pw / 3.0;
      const double cx = bx + bw / 2 + uniform(rng, -10, 10);
      const double cy = by + 0.7 * bh;
      const double j = spec.plate_corner_jitter;
      const std::array<cv::Point2f, 4> from = {cv::Point2f(0, 0), cv::Point2f(flat.width, 0),
                                               cv::Point2f(flat.width, flat.height), cv::Point2f(0, flat.height)};
      std::array<cv::Point2f, 4> to = {cv::Point2f(cx - pw / 2, cy - ph / 2), cv::Point2f(cx + pw / 2, cy - ph / 2),
                                       cv::Point2f(cx + pw / 2, cy + ph / 2), cv::Point2f(cx - pw / 2, cy + ph / 2)};
      for (cv::Point2f& p : to) p += cv::Point2f(static_cast<float>(uniform(rng, -j, j)), static_cast<float>(uniform(rng, -j, j)));
      const cv::Mat g = cv::getPerspectiveTransform(from.data(), to.data());

      cv::Mat plate_bgr, warped, mask;
      cv::cvtColor(plate.image, plate_bgr, cv::COLOR_GRAY2BGR);
      cv::warpPerspective(plate_bgr, warped, g, scene.image.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT);
      cv::warpPerspective(cv::Mat1b(plate.image.size(), static_cast<uchar>(255)), mask, g, scene.image.size(),
                          cv::INTER_NEAREST, cv::BORDER_CONSTANT);
      warped.copyTo(scene.image, mask);

      std::array<Point, 4> corners;
      for (std::size_t k = 0; k < 4; ++k) corners[k] = {to[k].x, to[k].y};
      object.plate = PlantedPlate{text, Quadrilateral(corners)};
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) warp(r, c) = g.at<double>(r, c);
      }
    }
    scene.plate_warps.push_back(warp);
    scene.spec.objects.push_back(std::move(object));
  }
  return scene;
}

}  // namespace platefind
