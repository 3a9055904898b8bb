#include "platefind/plate_localization.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <json.hpp>

namespace platefind {

using nlohmann::json;

DetectionMap::DetectionMap(int rows, int cols, double stride, double base_side)
    : rows_(rows), cols_(cols), stride_(stride), base_side_(base_side) {
  if (rows <= 0 || cols <= 0) throw Error(ErrorCode::InvalidMap, "map must have at least one cell");
  cells_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), DetectionCell{});
  validate();
}

void DetectionMap::validate() const {
  if (!(std::isfinite(stride_) && stride_ > 0) || !(std::isfinite(base_side_) && base_side_ > 0)) {
    throw Error(ErrorCode::InvalidMap, "stride and base_side must be positive and finite");
  }
  if (cells_.size() != static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_)) {
    throw Error(ErrorCode::InvalidMap, "cell count does not match h_c * w_c");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const DetectionCell& c = cells_[i];
    const double values[] = {c.p, c.a11, c.a12, c.tx, c.a21, c.a22, c.ty};
    for (double v : values) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidMap, "non-finite value in cell " + std::to_string(i));
    }
    if (c.p < 0.0 || c.p > 1.0) throw Error(ErrorCode::InvalidMap, "p outside [0,1] in cell " + std::to_string(i));
  }
}

std::string DetectionMap::to_json() const {
  json cells = json::array();
  for (const DetectionCell& c : cells_) cells.push_back({c.p, c.a11, c.a12, c.tx, c.a21, c.a22, c.ty});
  json doc = {{"h_c", rows_}, {"w_c", cols_}, {"stride", stride_}, {"base_side", base_side_}, {"cells", std::move(cells)}};
  return doc.dump();
}

DetectionMap DetectionMap::from_json(std::string_view text) {
  DetectionMap map;
  try {
    const json doc = json::parse(text);
    map.rows_ = doc.at("h_c").get<int>();
    map.cols_ = doc.at("w_c").get<int>();
    map.stride_ = doc.at("stride").get<double>();
    map.base_side_ = doc.at("base_side").get<double>();
    for (const json& c : doc.at("cells")) {
      if (!c.is_array() || c.size() != 7) throw Error(ErrorCode::InvalidMap, "each cell needs 7 numbers");
      map.cells_.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>(), c[3].get<double>(),
                            c[4].get<double>(), c[5].get<double>(), c[6].get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidMap, std::string("malformed detection map: ") + e.what());
  }
  if (map.rows_ <= 0 || map.cols_ <= 0) throw Error(ErrorCode::InvalidMap, "map must have at least one cell");
  map.validate();
  return map;
}

namespace {

constexpr std::array<Point, 4> kCanonicalCorners = {Point{-0.5, -0.5}, Point{0.5, -0.5}, Point{0.5, 0.5},
                                                    Point{-0.5, 0.5}};

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double polygon_area(const std::vector<Point>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2.0;
}

// Sutherland-Hodgman against a convex, positively oriented clip polygon.
std::vector<Point> clip_convex(std::vector<Point> subject, const std::array<Point, 4>& clip) {
  for (std::size_t e = 0; e < 4 && !subject.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % 4];
    std::vector<Point> next;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point p = subject[i];
      const Point q = subject[(i + 1) % subject.size()];
      const double dp = cross(a, b, p);
      const double dq = cross(a, b, q);
      if (dp >= 0) next.push_back(p);
      if ((dp >= 0) != (dq >= 0)) {
        const double t = dp / (dp - dq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    subject = std::move(next);
  }
  return subject;
}

bool inside_polygon(const std::array<Point, 4>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = 3; i < 4; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

double raster_iou(const Quadrilateral& a, const Quadrilateral& b) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const Quadrilateral* q : {&a, &b}) {
    for (const Point& p : q->corners()) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  }
  long inter = 0, uni = 0;
  for (long y = static_cast<long>(std::floor(y0)); y < static_cast<long>(std::ceil(y1)); ++y) {
    for (long x = static_cast<long>(std::floor(x0)); x < static_cast<long>(std::ceil(x1)); ++x) {
      const bool ia = inside_polygon(a.corners(), x + 0.5, y + 0.5);
      const bool ib = inside_polygon(b.corners(), x + 0.5, y + 0.5);
      inter += (ia && ib);
      uni += (ia || ib);
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::optional<Quadrilateral> quad_from_cell(const DetectionMap& map, int row, int col) {
  const DetectionCell& c = map.at(row, col);
  const double a11 = std::max(c.a11, 0.0);
  const double a22 = std::max(c.a22, 0.0);
  const Point center = map.cell_center(row, col);
  std::array<Point, 4> pts;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point q = kCanonicalCorners[i];
    pts[i] = {map.base_side() * (a11 * q.x + c.a12 * q.y + c.tx) + center.x,
              map.base_side() * (c.a21 * q.x + a22 * q.y + c.ty) + center.y};
  }
  if (std::abs(signed_area(pts)) < 1.0) return std::nullopt;
  try {
    return Quadrilateral::from_unordered(pts);
  } catch (const Error&) {
    return std::nullopt;
  }
}

DetectionCell encode_quad_cell(const DetectionMap& map, int row, int col, const Quadrilateral& quad) {
  // Sum q q^T over the canonical corners is the identity, so the least-squares
  // affine reduces to a weighted sum of centred corners.
  const Point center = map.cell_center(row, col);
  Point mean{0, 0};
  for (const Point& p : quad.corners()) {
    mean.x += p.x / 4;
    mean.y += p.y / 4;
  }
  DetectionCell cell;
  const double s = map.base_side();
  for (std::size_t i = 0; i < 4; ++i) {
    const Point d{quad[i].x - mean.x, quad[i].y - mean.y};
    cell.a11 += d.x * kCanonicalCorners[i].x / s;
    cell.a12 += d.x * kCanonicalCorners[i].y / s;
    cell.a21 += d.y * kCanonicalCorners[i].x / s;
    cell.a22 += d.y * kCanonicalCorners[i].y / s;
  }
  cell.tx = (mean.x - center.x) / s;
  cell.ty = (mean.y - center.y) / s;
  return cell;
}

std::vector<ScoredQuad> decode_detection_map(const DetectionMap& map, double prob_threshold) {
  map.validate();
  if (!(prob_threshold > 0.0 && prob_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "prob_threshold must lie in (0,1]");
  }
  std::vector<ScoredQuad> out;
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      const double p = map.at(r, c).p;
      if (p < prob_threshold) continue;
      if (auto quad = quad_from_cell(map, r, c)) out.push_back({*quad, p, {r, c}});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredQuad& a, const ScoredQuad& b) { return a.score > b.score; });
  return out;
}

double quad_iou(const Quadrilateral& a, const Quadrilateral& b) {
  if (!a.is_convex() || !b.is_convex()) return raster_iou(a, b);
  const std::vector<Point> subject(a.corners().begin(), a.corners().end());
  const std::vector<Point> inter_poly = clip_convex(subject, b.corners());
  const double inter = inter_poly.size() >= 3 ? std::max(0.0, polygon_area(inter_poly)) : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<ScoredQuad> nms_quads(std::vector<ScoredQuad> quads, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "NMS iou_threshold must lie in [0,1)");
  }
  std::stable_sort(quads.begin(), quads.end(), [](const ScoredQuad& a, const ScoredQuad& b) { return a.score > b.score; });
  std::vector<ScoredQuad> kept;
  for (ScoredQuad& candidate : quads) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredQuad& k) {
      return quad_iou(k.quad, candidate.quad) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(candidate));
  }
  return kept;
}

Homography::Homography(const Eigen::Matrix3d& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (!m.allFinite() || scale == 0.0 || std::abs(m(2, 2)) <= 1e-12 * scale) {
    throw Error(ErrorCode::DegenerateQuad, "homography cannot be normalized");
  }
  m_ = m / m(2, 2);
  const double det2 = m_(0, 0) * m_(1, 1) - m_(0, 1) * m_(1, 0);
  const double block = std::max({std::abs(m_(0, 0)), std::abs(m_(0, 1)), std::abs(m_(1, 0)), std::abs(m_(1, 1))});
  if (!(std::abs(det2) > 1e-12 * block * block)) {
    throw Error(ErrorCode::DegenerateQuad, "homography has a singular linear block");
  }
}

Point Homography::apply(Point p) const noexcept {
  const double w = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
  return {(m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2)) / w, (m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2)) / w};
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

namespace {

// Similarity taking points to zero mean and mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::array<Point, 4>& pts) {
  double mx = 0, my = 0;
  for (const Point& p : pts) {
    mx += p.x / 4;
    my += p.y / 4;
  }
  double dist = 0;
  for (const Point& p : pts) dist += std::hypot(p.x - mx, p.y - my) / 4;
  const double s = dist > 0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  return t;
}

Point transform(const Eigen::Matrix3d& t, Point p) {
  return {t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2), t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
}

}  // namespace

Homography fit_rectifying_homography(const Quadrilateral& quad, int out_w, int out_h) {
  if (out_w < 8 || out_h < 8) throw Error(ErrorCode::InvalidArgument, "rectified plate must be at least 8x8");
  const auto& src = quad.corners();

  double extent = 0;
  for (const Point& p : src) {
    for (const Point& q : src) extent = std::max(extent, std::hypot(p.x - q.x, p.y - q.y));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const Point a = src[i], b = src[(i + 1) % 4], c = src[(i + 2) % 4];
    if (std::abs(cross(a, b, c)) <= 1e-9 * extent * extent) {
      throw Error(ErrorCode::DegenerateQuad, "three quadrilateral corners are collinear");
    }
  }

  const std::array<Point, 4> dst = {Point{0, 0}, Point{static_cast<double>(out_w), 0},
                                    Point{static_cast<double>(out_w), static_cast<double>(out_h)},
                                    Point{0, static_cast<double>(out_h)}};
  const Eigen::Matrix3d ts = normalizing_transform(src);
  const Eigen::Matrix3d td = normalizing_transform(dst);

  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const Point x = transform(ts, src[static_cast<std::size_t>(i)]);
    const Point u = transform(td, dst[static_cast<std::size_t>(i)]);
    a.row(2 * i) << x.x, x.y, 1, 0, 0, 0, -u.x * x.x, -u.x * x.y;
    a.row(2 * i + 1) << 0, 0, 0, x.x, x.y, 1, -u.y * x.x, -u.y * x.y;
    b(2 * i) = u.x;
    b(2 * i + 1) = u.y;
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) throw Error(ErrorCode::DegenerateQuad, "homography system is singular");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);

  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return Homography(td.inverse() * hn * ts);
}

RectifiedPlate warp_plate(const cv::Mat& image, const Quadrilateral& quad, int out_w, int out_h) {
  if (image.empty() || image.depth() != CV_8U || (image.channels() != 1 && image.channels() != 3)) {
    throw Error(ErrorCode::InvalidArgument, "warp_plate expects a non-empty 8-bit 1- or 3-channel image");
  }
  const Homography h = fit_rectifying_homography(quad, out_w, out_h);
  const Eigen::Matrix3d inv = h.matrix().inverse();
  const int channels = image.channels();
  cv::Mat out(out_h, out_w, image.type(), cv::Scalar::all(0));

  auto sample = [&](int x, int y, int ch) -> double {
    if (x < 0 || y < 0 || x >= image.cols || y >= image.rows) return 0.0;
    return image.ptr<uchar>(y)[x * channels + ch];
  };

  for (int v = 0; v < out_h; ++v) {
    uchar* row = out.ptr<uchar>(v);
    for (int u = 0; u < out_w; ++u) {
      const double w = inv(2, 0) * u + inv(2, 1) * v + inv(2, 2);
      const double sx = (inv(0, 0) * u + inv(0, 1) * v + inv(0, 2)) / w;
      const double sy = (inv(1, 0) * u + inv(1, 1) * v + inv(1, 2)) / w;
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      if (!std::isfinite(fx0) || !std::isfinite(fy0) || fx0 < -2 || fy0 < -2 || fx0 > image.cols + 1 ||
          fy0 > image.rows + 1) {
        continue;
      }
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const double ax = sx - fx0;
      const double ay = sy - fy0;
      for (int ch = 0; ch < channels; ++ch) {
        const double top = sample(x0, y0, ch) * (1 - ax) + sample(x0 + 1, y0, ch) * ax;
        const double bottom = sample(x0, y0 + 1, ch) * (1 - ax) + sample(x0 + 1, y0 + 1, ch) * ax;
        const double value = top * (1 - ay) + bottom * ay;
        row[u * channels + ch] = static_cast<uchar>(std::clamp(std::lround(value), 0L, 255L));
      }
    }
  }
  return {out, quad, h, 1.0};
}

std::vector<RectifiedPlate> localize_plate(const cv::Mat& region, const PlateMapBackend& backend,
                                           const LocalizationConfig& config, const RegionContext& context) {
  if (region.empty()) throw Error(ErrorCode::EmptyImage, "plate search region has no pixels");
  DetectionMap map;
  try {
    map = backend.produce(region, context);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::BackendFailure, backend.name() + ": " + e.what());
  }
  const auto survivors = nms_quads(decode_detection_map(map, config.prob_threshold), config.nms_iou);
  std::vector<RectifiedPlate> plates;
  plates.reserve(survivors.size());
  for (const ScoredQuad& sq : survivors) {
    RectifiedPlate plate = warp_plate(region, sq.quad, config.plate_width, config.plate_height);
    plate.score = sq.score;
    plates.push_back(std::move(plate));
  }
  return plates;
}

MockPlateMapBackend::MockPlateMapBackend(SceneSpec scene, double stride, double base_side)
    : scene_(std::move(scene)), stride_(stride), base_side_(base_side) {}

DetectionMap MockPlateMapBackend::produce(const cv::Mat& region, const RegionContext& context) const {
  const int rows = std::max(1, static_cast<int>(std::ceil(region.rows / stride_)));
  const int cols = std::max(1, static_cast<int>(std::ceil(region.cols / stride_)));
  DetectionMap map(rows, cols, stride_, base_side_);
  for (const PlantedObject& o : scene_.objects) {
    if (!o.plate) continue;
    const Point full_center = o.plate->quad.centroid();
    if (context.region && !context.region->contains(full_center)) continue;
    const Quadrilateral local = o.plate->quad.translated(-context.origin.x, -context.origin.y);
    const Point c = local.centroid();
    if (c.x < 0 || c.y < 0 || c.x >= region.cols || c.y >= region.rows) continue;
    const int r = std::min(rows - 1, static_cast<int>(c.y / stride_));
    const int k = std::min(cols - 1, static_cast<int>(c.x / stride_));
    DetectionCell cell = encode_quad_cell(map, r, k, local);
    cell.p = 1.0;
    map.at(r, k) = cell;
  }
  return map;
}

}  // namespace platefind
