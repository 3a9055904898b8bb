#include "platefind/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace platefind {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyPlate: return "EmptyPlate";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyImage: return "EmptyImage";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::MalformedAnnotation: return "MalformedAnnotation";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::InvalidMap: return "InvalidMap";
    case ErrorCode::DegenerateQuad: return "DegenerateQuad";
    case ErrorCode::NoCharactersFound: return "NoCharactersFound";
    case ErrorCode::ModelFailure: return "ModelFailure";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidConfusionTable: return "InvalidConfusionTable";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::DuplicateRecordId: return "DuplicateRecordId";
    case ErrorCode::UndecodableImage: return "UndecodableImage";
    case ErrorCode::StoreUnavailable: return "StoreUnavailable";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NoPlateFound: return "NoPlateFound";
    case ErrorCode::RecordNotFound: return "RecordNotFound";
    case ErrorCode::CropNotFound: return "CropNotFound";
    case ErrorCode::JobNotFound: return "JobNotFound";
    case ErrorCode::MalformedRequest: return "MalformedRequest";
    case ErrorCode::InvalidFuzz: return "InvalidFuzz";
    case ErrorCode::InvalidLimit: return "InvalidLimit";
    case ErrorCode::InvalidPagination: return "InvalidPagination";
    case ErrorCode::UnknownEndpoint: return "UnknownEndpoint";
  }
  return "Unknown";
}

const std::vector<ErrorCode>& all_error_codes() {
  static const std::vector<ErrorCode> codes = {
      ErrorCode::EmptyPlate,
      ErrorCode::UnknownCategory,
      ErrorCode::InvalidArgument,
      ErrorCode::EmptyImage,
      ErrorCode::BackendFailure,
      ErrorCode::MalformedAnnotation,
      ErrorCode::UnknownImage,
      ErrorCode::InvalidMap,
      ErrorCode::DegenerateQuad,
      ErrorCode::NoCharactersFound,
      ErrorCode::ModelFailure,
      ErrorCode::InsufficientData,
      ErrorCode::InvalidConfusionTable,
      ErrorCode::CorruptStore,
      ErrorCode::DuplicateRecordId,
      ErrorCode::UndecodableImage,
      ErrorCode::StoreUnavailable,
      ErrorCode::IoError,
      ErrorCode::NoPlateFound,
      ErrorCode::RecordNotFound,
      ErrorCode::CropNotFound,
      ErrorCode::JobNotFound,
      ErrorCode::MalformedRequest,
      ErrorCode::InvalidFuzz,
      ErrorCode::InvalidLimit,
      ErrorCode::InvalidPagination,
      ErrorCode::UnknownEndpoint,
  };
  return codes;
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (ErrorCode c : all_error_codes()) {
    if (error_code_name(c) == name) return c;
  }
  return std::nullopt;
}

std::string_view canonical_label(VehicleCategory category) {
  switch (category) {
    case VehicleCategory::TwoWheeler: return "2-wheeler";
    case VehicleCategory::ThreeWheeler: return "3-wheeler";
    case VehicleCategory::FourWheeler: return "4-wheeler";
    case VehicleCategory::GtFourWheeler: return ">4-wheeler";
  }
  return "?";
}

VehicleCategory parse_vehicle_category(std::string_view label) {
  std::string key;
  for (char c : label) {
    if (c == '-' || c == ' ' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "2wheeler") return VehicleCategory::TwoWheeler;
  if (key == "3wheeler") return VehicleCategory::ThreeWheeler;
  if (key == "4wheeler") return VehicleCategory::FourWheeler;
  if (key == ">4wheeler") return VehicleCategory::GtFourWheeler;
  throw Error(ErrorCode::UnknownCategory, "unknown vehicle category '" + std::string(label) + "'");
}

bool is_plate_char(char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z');
}

int char_class_index(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'Z') return 10 + (c - 'A');
  return -1;
}

BoundingBox::BoundingBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  const bool finite = std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
                      std::isfinite(y_max);
  if (!finite || x_min < 0 || y_min < 0 || !(x_min < x_max) || !(y_min < y_max)) {
    throw Error(ErrorCode::InvalidArgument, "invalid bounding box");
  }
}

std::optional<BoundingBox> BoundingBox::clipped(double w, double h) const {
  const double x0 = std::clamp(x_min_, 0.0, w);
  const double y0 = std::clamp(y_min_, 0.0, h);
  const double x1 = std::clamp(x_max_, 0.0, w);
  const double y1 = std::clamp(y_max_, 0.0, h);
  if (!(x0 < x1) || !(y0 < y1)) return std::nullopt;
  return BoundingBox(x0, y0, x1, y1);
}

double signed_area(const std::array<Point, 4>& c) noexcept {
  double twice = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point& a = c[i];
    const Point& b = c[(i + 1) % 4];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2.0;
}

namespace {

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

bool is_simple_polygon(const std::array<Point, 4>& c) noexcept {
  return !segments_intersect(c[0], c[1], c[2], c[3]) && !segments_intersect(c[1], c[2], c[3], c[0]);
}

Quadrilateral::Quadrilateral(const std::array<Point, 4>& corners) : corners_(corners) {
  for (const Point& p : corners) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorCode::DegenerateQuad, "non-finite quadrilateral corner");
    }
  }
  if (!(signed_area(corners) > 0.0) || !is_simple_polygon(corners)) {
    throw Error(ErrorCode::DegenerateQuad, "quadrilateral must be simple with positive area in TL,TR,BR,BL order");
  }
}

Quadrilateral Quadrilateral::from_unordered(std::array<Point, 4> points) {
  Point c{0, 0};
  for (const Point& p : points) {
    c.x += p.x / 4;
    c.y += p.y / 4;
  }
  // Increasing atan2 in a y-down frame walks TL -> TR -> BR -> BL.
  std::sort(points.begin(), points.end(), [c](Point a, Point b) {
    return std::atan2(a.y - c.y, a.x - c.x) < std::atan2(b.y - c.y, b.x - c.x);
  });
  std::size_t first = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    if (points[i].x + points[i].y < points[first].x + points[first].y) first = i;
  }
  std::rotate(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(first), points.end());
  return Quadrilateral(points);
}

double Quadrilateral::area() const noexcept { return signed_area(corners_); }

Point Quadrilateral::centroid() const noexcept {
  // Area centroid via the triangle fan.
  double a_sum = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point& p = corners_[i];
    const Point& q = corners_[(i + 1) % 4];
    const double w = p.x * q.y - q.x * p.y;
    a_sum += w;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  return {cx / (3.0 * a_sum), cy / (3.0 * a_sum)};
}

bool Quadrilateral::is_convex() const noexcept {
  for (std::size_t i = 0; i < 4; ++i) {
    if (cross(corners_[i], corners_[(i + 1) % 4], corners_[(i + 2) % 4]) < 0) return false;
  }
  return true;
}

Quadrilateral Quadrilateral::translated(double dx, double dy) const {
  auto moved = corners_;
  for (Point& p : moved) {
    p.x += dx;
    p.y += dy;
  }
  return Quadrilateral(moved);
}

PlateString::PlateString(std::string text) : text_(std::move(text)) {
  if (text_.empty()) throw Error(ErrorCode::EmptyPlate, "plate string is empty");
  if (!std::all_of(text_.begin(), text_.end(), is_plate_char)) {
    throw Error(ErrorCode::InvalidArgument, "plate string '" + text_ + "' is not normalized");
  }
}

PlateString normalize_plate_string(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (is_plate_char(up)) out.push_back(up);
  }
  if (out.empty()) throw Error(ErrorCode::EmptyPlate, "no plate characters in '" + std::string(raw) + "'");
  return PlateString(std::move(out));
}

}  // namespace platefind
