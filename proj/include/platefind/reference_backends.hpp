#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

#include "platefind/plate_localization.hpp"
#include "platefind/vehicle_detection.hpp"

namespace platefind {

// Foreground blobs against the image's median colour, labelled by a softmax
// regression over blob shape features. Trained in-process on sizes drawn from
// the synthetic scene generator, so it only understands scenes of that style.
class ReferenceVehicleBackend final : public DetectorBackend {
 public:
  static ReferenceVehicleBackend train(std::uint64_t seed = 11, int samples_per_class = 400);

  std::string name() const override { return "reference-blob"; }
  std::vector<VehicleDetection> detect(const cv::Mat& image) const override;

  /// Class probabilities for a blob of the given size and fill ratio.
  std::array<double, 4> classify(double width, double height, double fill) const;

 private:
  ReferenceVehicleBackend() = default;
  static Eigen::Vector4d features(double width, double height, double fill);

  Eigen::Matrix4d weights_ = Eigen::Matrix4d::Zero();  // class x feature
  Eigen::Vector4d mean_ = Eigen::Vector4d::Zero();
  Eigen::Vector4d scale_ = Eigen::Vector4d::Ones();
};

// Finds the brightest plate-shaped blob in a vehicle crop and writes its
// corner fit into the cell under its centre.
class ReferencePlateMapBackend final : public PlateMapBackend {
 public:
  explicit ReferencePlateMapBackend(double stride = kDefaultStride, double base_side = kDefaultBaseSide)
      : stride_(stride), base_side_(base_side) {}

  std::string name() const override { return "reference-bright-quad"; }
  DetectionMap produce(const cv::Mat& region, const RegionContext& context) const override;

 private:
  double stride_;
  double base_side_;
};

}  // namespace platefind
