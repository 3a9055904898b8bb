#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include "platefind/model.hpp"
#include "platefind/scene.hpp"

namespace platefind {

// One cell of a dense plate map: objectness plus the affine warp of the
// canonical unit square centred on the cell.
struct DetectionCell {
  double p = 0.0;
  double a11 = 0.0, a12 = 0.0, tx = 0.0;
  double a21 = 0.0, a22 = 0.0, ty = 0.0;

  friend bool operator==(const DetectionCell&, const DetectionCell&) = default;
};

struct CellIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

class DetectionMap {
 public:
  DetectionMap() = default;
  DetectionMap(int rows, int cols, double stride, double base_side);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double stride() const noexcept { return stride_; }
  double base_side() const noexcept { return base_side_; }

  DetectionCell& at(int row, int col) { return cells_.at(static_cast<std::size_t>(row * cols_ + col)); }
  const DetectionCell& at(int row, int col) const {
    return cells_.at(static_cast<std::size_t>(row * cols_ + col));
  }
  const std::vector<DetectionCell>& cells() const noexcept { return cells_; }

  /// Image-frame centre of a cell: ((col + 1/2) * stride, (row + 1/2) * stride).
  Point cell_center(int row, int col) const noexcept {
    return {(col + 0.5) * stride_, (row + 0.5) * stride_};
  }

  /// Throws InvalidMap on non-finite values, p outside [0,1], or bad geometry.
  void validate() const;

  /// {"h_c","w_c","stride","base_side","cells":[[p,a11,a12,tx,a21,a22,ty],...]}, row-major.
  std::string to_json() const;
  static DetectionMap from_json(std::string_view text);

  friend bool operator==(const DetectionMap&, const DetectionMap&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  double stride_ = 16.0;
  double base_side_ = 124.0;
  std::vector<DetectionCell> cells_;
};

struct ScoredQuad {
  Quadrilateral quad;
  double score = 0.0;
  CellIndex source_cell;
};

inline constexpr double kDefaultStride = 16.0;
inline constexpr double kDefaultBaseSide = 7.75 * kDefaultStride;

/// Corners base_side * (A q + t) + centre for q in the canonical square, with
/// a11, a22 clamped at 0, reordered TL,TR,BR,BL. nullopt when the quad's
/// area is below 1 px^2.
std::optional<Quadrilateral> quad_from_cell(const DetectionMap& map, int row, int col);

/// Affine cell parameters whose decode best fits `quad` in the least-squares
/// sense (exact for parallelograms). p is left at 0.
DetectionCell encode_quad_cell(const DetectionMap& map, int row, int col, const Quadrilateral& quad);

/// Cells with p >= prob_threshold decoded to quads, sorted by descending score.
std::vector<ScoredQuad> decode_detection_map(const DetectionMap& map, double prob_threshold);

/// Area IoU. Convex pairs use polygon clipping; anything else is rasterized
/// at 1 px.
double quad_iou(const Quadrilateral& a, const Quadrilateral& b);

/// Greedy suppression: survivors sorted by descending score (stable on ties),
/// pairwise quad_iou below iou_threshold.
std::vector<ScoredQuad> nms_quads(std::vector<ScoredQuad> quads, double iou_threshold);

// Projective map normalized so that m(2,2) == 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws DegenerateQuad if m(2,2) is ~0 or the upper-left 2x2 block is singular.
  explicit Homography(const Eigen::Matrix3d& m);

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  Point apply(Point p) const noexcept;
  Homography inverse() const;

 private:
  Eigen::Matrix3d m_;
};

/// H with H(TL)=(0,0), H(TR)=(out_w,0), H(BR)=(out_w,out_h), H(BL)=(0,out_h).
/// Throws DegenerateQuad if any three corners are collinear; InvalidArgument
/// if an output side is below 8 px.
Homography fit_rectifying_homography(const Quadrilateral& quad, int out_w, int out_h);

struct RectifiedPlate {
  cv::Mat image;  // out_h x out_w, same type as the source
  Quadrilateral source_quad;
  Homography homography;  // source -> rectified
  double score = 1.0;
};

/// Output pixel (u,v) is sampled bilinearly at H^-1 (u,v); samples outside
/// the source read as 0. Supports 8-bit images with 1 or 3 channels.
RectifiedPlate warp_plate(const cv::Mat& image, const Quadrilateral& quad, int out_w, int out_h);

/// Where a region crop sits in its parent image. Backends that know the scene
/// (mocks) use it; learned backends ignore it.
struct RegionContext {
  cv::Point origin{0, 0};
  std::optional<BoundingBox> region;
};

class PlateMapBackend {
 public:
  virtual ~PlateMapBackend() = default;
  virtual std::string name() const = 0;
  virtual bool concurrent_safe() const { return true; }
  virtual DetectionMap produce(const cv::Mat& region, const RegionContext& context) const = 0;
};

struct LocalizationConfig {
  double prob_threshold = 0.5;
  double nms_iou = 0.1;
  int plate_width = 240;
  int plate_height = 80;
};

/// Map -> decode -> NMS -> warp. Quads are in crop coordinates.
/// Backend exceptions surface as BackendFailure.
std::vector<RectifiedPlate> localize_plate(const cv::Mat& region, const PlateMapBackend& backend,
                                           const LocalizationConfig& config, const RegionContext& context = {});

// Emits p = 1 at the cell under each planted plate centroid that falls inside
// the region, carrying the affine fit of that plate's quad.
class MockPlateMapBackend final : public PlateMapBackend {
 public:
  explicit MockPlateMapBackend(SceneSpec scene, double stride = kDefaultStride, double base_side = kDefaultBaseSide);

  std::string name() const override { return "mock-plate-map"; }
  DetectionMap produce(const cv::Mat& region, const RegionContext& context) const override;

 private:
  SceneSpec scene_;
  double stride_;
  double base_side_;
};

// Serves a fixed map regardless of input.
class FixedPlateMapBackend final : public PlateMapBackend {
 public:
  explicit FixedPlateMapBackend(DetectionMap map) : map_(std::move(map)) {}
  std::string name() const override { return "fixed-plate-map"; }
  DetectionMap produce(const cv::Mat&, const RegionContext&) const override { return map_; }

 private:
  DetectionMap map_;
};

}  // namespace platefind
