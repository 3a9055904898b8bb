#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "platefind/error.hpp"

namespace platefind {

enum class VehicleCategory { TwoWheeler, ThreeWheeler, FourWheeler, GtFourWheeler };

inline constexpr std::array<VehicleCategory, 4> kAllCategories = {
    VehicleCategory::TwoWheeler, VehicleCategory::ThreeWheeler,
    VehicleCategory::FourWheeler, VehicleCategory::GtFourWheeler};

/// Canonical file/API label: "2-wheeler", "3-wheeler", "4-wheeler", ">4-wheeler".
std::string_view canonical_label(VehicleCategory category);

/// Case-insensitive. Accepts "2-wheeler", "2 wheeler", "2wheeler" and the
/// same forms for 3, 4 and ">4". Throws UnknownCategory otherwise.
VehicleCategory parse_vehicle_category(std::string_view label);

inline constexpr std::string_view kPlateAlphabet = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
inline constexpr int kNumCharClasses = 36;

bool is_plate_char(char c) noexcept;
/// Index of c in kPlateAlphabet, or -1.
int char_class_index(char c) noexcept;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box in image pixels, origin top-left.
class BoundingBox {
 public:
  BoundingBox() = default;
  /// Throws InvalidArgument unless finite, non-negative and x_min < x_max, y_min < y_max.
  BoundingBox(double x_min, double y_min, double x_max, double y_max);

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }
  Point center() const noexcept { return {(x_min_ + x_max_) / 2, (y_min_ + y_max_) / 2}; }
  bool contains(Point p) const noexcept {
    return p.x >= x_min_ && p.x <= x_max_ && p.y >= y_min_ && p.y <= y_max_;
  }

  /// Intersection with [0,w]x[0,h]; nullopt if nothing of positive area remains.
  std::optional<BoundingBox> clipped(double w, double h) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x_min_ = 0.0;
  double y_min_ = 0.0;
  double x_max_ = 1.0;
  double y_max_ = 1.0;
};

/// Plate region corners ordered TL, TR, BR, BL as seen in the image (y down).
class Quadrilateral {
 public:
  Quadrilateral() = default;
  /// Throws DegenerateQuad if the polygon self-intersects or its signed
  /// area in the given order is not positive.
  explicit Quadrilateral(const std::array<Point, 4>& corners);

  /// Reorders four points into TL, TR, BR, BL before validating.
  static Quadrilateral from_unordered(std::array<Point, 4> points);

  const std::array<Point, 4>& corners() const noexcept { return corners_; }
  const Point& operator[](std::size_t i) const noexcept { return corners_[i]; }
  double area() const noexcept;
  Point centroid() const noexcept;
  bool is_convex() const noexcept;
  Quadrilateral translated(double dx, double dy) const;

  friend bool operator==(const Quadrilateral&, const Quadrilateral&) = default;

 private:
  std::array<Point, 4> corners_{Point{0, 0}, Point{1, 0}, Point{1, 1}, Point{0, 1}};
};

/// Shoelace signed area; positive for TL,TR,BR,BL order in y-down coordinates.
double signed_area(const std::array<Point, 4>& corners) noexcept;
bool is_simple_polygon(const std::array<Point, 4>& corners) noexcept;

/// Normalized plate text: non-empty, characters from kPlateAlphabet only.
class PlateString {
 public:
  /// Throws EmptyPlate if empty, InvalidArgument if a character is outside the alphabet.
  explicit PlateString(std::string text);

  const std::string& str() const noexcept { return text_; }
  std::size_t size() const noexcept { return text_.size(); }
  char operator[](std::size_t i) const noexcept { return text_[i]; }

  friend bool operator==(const PlateString&, const PlateString&) = default;
  friend auto operator<=>(const PlateString&, const PlateString&) = default;

 private:
  std::string text_;
};

/// Uppercases and strips everything outside [0-9A-Z]. Throws EmptyPlate if nothing is left.
PlateString normalize_plate_string(std::string_view raw);

}  // namespace platefind
