#include "platefind/reference_backends.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

#include "platefind/plate_ocr.hpp"
#include "platefind/synthetic.hpp"

namespace platefind {

Eigen::Vector4d ReferenceVehicleBackend::features(double width, double height, double fill) {
  return {std::log(width), std::log(height), fill, 1.0};
}

ReferenceVehicleBackend ReferenceVehicleBackend::train(std::uint64_t seed, int samples_per_class) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Vector4d> xs;
  std::vector<int> ys;
  for (int c = 0; c < 4; ++c) {
    const SizeRange r = vehicle_size_range(kAllCategories[static_cast<std::size_t>(c)]);
    for (int i = 0; i < samples_per_class; ++i) {
      const double w = std::uniform_real_distribution<double>(r.min_w, r.max_w)(rng);
      const double h = std::uniform_real_distribution<double>(r.min_h, r.max_h)(rng) * 1.12;
      const double fill = std::uniform_real_distribution<double>(0.85, 1.0)(rng);
      xs.push_back(features(w, h, fill));
      ys.push_back(c);
    }
  }
  ReferenceVehicleBackend model;
  const double n = static_cast<double>(xs.size());
  for (const auto& x : xs) model.mean_ += x / n;
  Eigen::Vector4d var = Eigen::Vector4d::Zero();
  for (const auto& x : xs) var += (x - model.mean_).cwiseAbs2() / n;
  model.scale_ = var.cwiseSqrt().unaryExpr([](double s) { return s > 1e-12 ? 1.0 / s : 1.0; });
  model.mean_(3) = 0.0;
  model.scale_(3) = 1.0;

  for (int iter = 0; iter < 800; ++iter) {
    Eigen::Matrix4d grad = Eigen::Matrix4d::Zero();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Eigen::Vector4d z = (xs[i] - model.mean_).cwiseProduct(model.scale_);
      Eigen::Vector4d logits = model.weights_ * z;
      logits.array() -= logits.maxCoeff();
      Eigen::Vector4d p = logits.array().exp();
      p /= p.sum();
      p(ys[i]) -= 1.0;
      grad += p * z.transpose() / n;
    }
    model.weights_ -= 0.5 * grad;
  }
  return model;
}

std::array<double, 4> ReferenceVehicleBackend::classify(double width, double height, double fill) const {
  const Eigen::Vector4d z = (features(width, height, fill) - mean_).cwiseProduct(scale_);
  Eigen::Vector4d logits = weights_ * z;
  logits.array() -= logits.maxCoeff();
  Eigen::Vector4d p = logits.array().exp();
  p /= p.sum();
  return {p(0), p(1), p(2), p(3)};
}

std::vector<VehicleDetection> ReferenceVehicleBackend::detect(const cv::Mat& image) const {
  cv::Mat3b bgr;
  if (image.type() == CV_8UC3) {
    bgr = image;
  } else {
    cv::cvtColor(to_gray(image), bgr, cv::COLOR_GRAY2BGR);
  }
  std::array<int, 3> median{};
  for (int ch = 0; ch < 3; ++ch) {
    std::array<long, 256> hist{};
    for (int y = 0; y < bgr.rows; ++y) {
      for (int x = 0; x < bgr.cols; ++x) ++hist[bgr(y, x)[ch]];
    }
    long acc = 0;
    const long half = static_cast<long>(bgr.total()) / 2;
    for (int v = 0; v < 256; ++v) {
      acc += hist[static_cast<std::size_t>(v)];
      if (acc > half) {
        median[static_cast<std::size_t>(ch)] = v;
        break;
      }
    }
  }
  cv::Mat1b fg(bgr.size(), static_cast<uchar>(0));
  for (int y = 0; y < bgr.rows; ++y) {
    for (int x = 0; x < bgr.cols; ++x) {
      int diff = 0;
      for (int ch = 0; ch < 3; ++ch) diff = std::max(diff, std::abs(bgr(y, x)[ch] - median[static_cast<std::size_t>(ch)]));
      fg(y, x) = diff > 40 ? 255 : 0;
    }
  }
  cv::morphologyEx(fg, fg, cv::MORPH_CLOSE, cv::getStructuringElement(cv::MORPH_RECT, {5, 5}));

  cv::Mat1i labels;
  cv::Mat stats, centroids;
  const int n = cv::connectedComponentsWithStats(fg, labels, stats, centroids, 8, CV_32S);
  std::vector<VehicleDetection> out;
  for (int i = 1; i < n; ++i) {
    const int area = stats.at<int>(i, cv::CC_STAT_AREA);
    if (area < 3000) continue;
    const cv::Rect r(stats.at<int>(i, cv::CC_STAT_LEFT), stats.at<int>(i, cv::CC_STAT_TOP),
                     stats.at<int>(i, cv::CC_STAT_WIDTH), stats.at<int>(i, cv::CC_STAT_HEIGHT));
    const double fill = static_cast<double>(area) / r.area();
    const auto probs = classify(r.width, r.height, fill);
    const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    VehicleDetection d;
    d.category = kAllCategories[best];
    d.box = BoundingBox(r.x, r.y, r.x + r.width, r.y + r.height);
    d.mask = labels(r) == i;
    d.mask /= 255;
    d.score = probs[best];
    out.push_back(std::move(d));
  }
  return out;
}

DetectionMap ReferencePlateMapBackend::produce(const cv::Mat& region, const RegionContext&) const {
  const int rows = std::max(1, static_cast<int>(std::ceil(region.rows / stride_)));
  const int cols = std::max(1, static_cast<int>(std::ceil(region.cols / stride_)));
  DetectionMap map(rows, cols, stride_, base_side_);

  const cv::Mat1b bright = to_gray(region) >= 190;
  cv::Mat1i labels;
  cv::Mat stats, centroids;
  const int n = cv::connectedComponentsWithStats(bright, labels, stats, centroids, 8, CV_32S);
  int best = -1;
  int best_area = 0;
  for (int i = 1; i < n; ++i) {
    const int w = stats.at<int>(i, cv::CC_STAT_WIDTH);
    const int h = stats.at<int>(i, cv::CC_STAT_HEIGHT);
    const int area = stats.at<int>(i, cv::CC_STAT_AREA);
    if (w < 60 || h < 15) continue;
    const double aspect = static_cast<double>(w) / h;
    if (aspect < 2.0 || aspect > 5.0 || area < 0.4 * w * h) continue;
    if (area > best_area) {
      best = i;
      best_area = area;
    }
  }
  if (best < 0) return map;

  // Extreme pixels along the diagonals give the four outer corners.
  cv::Point tl(0, 0), tr(0, 0), br(0, 0), bl(0, 0);
  int min_sum = INT32_MAX, max_sum = INT32_MIN, min_diff = INT32_MAX, max_diff = INT32_MIN;
  for (int y = 0; y < labels.rows; ++y) {
    for (int x = 0; x < labels.cols; ++x) {
      if (labels(y, x) != best) continue;
      if (x + y < min_sum) min_sum = x + y, tl = {x, y};
      if (x + y > max_sum) max_sum = x + y, br = {x, y};
      if (x - y > max_diff) max_diff = x - y, tr = {x, y};
      if (x - y < min_diff) min_diff = x - y, bl = {x, y};
    }
  }
  try {
    const Quadrilateral quad({Point{static_cast<double>(tl.x), static_cast<double>(tl.y)},
                              Point{tr.x + 1.0, static_cast<double>(tr.y)}, Point{br.x + 1.0, br.y + 1.0},
                              Point{static_cast<double>(bl.x), bl.y + 1.0}});
    const Point c = quad.centroid();
    const int r = std::clamp(static_cast<int>(c.y / stride_), 0, rows - 1);
    const int k = std::clamp(static_cast<int>(c.x / stride_), 0, cols - 1);
    DetectionCell cell = encode_quad_cell(map, r, k, quad);
    cell.p = 0.9;
    map.at(r, k) = cell;
  } catch (const Error&) {
    // Degenerate corner fit: report no plate.
  }
  return map;
}

}  // namespace platefind
