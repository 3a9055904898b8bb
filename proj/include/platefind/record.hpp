#pragma once

#include <chrono>
#include <optional>
#include <string>

#include <json.hpp>

#include "platefind/model.hpp"
#include "platefind/plate_ocr.hpp"

namespace platefind {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// "YYYY-MM-DDTHH:MM:SS.mmmZ"
std::string format_rfc3339(Timestamp t);
/// Accepts the format above, optional fraction, 'Z' or a numeric offset.
Timestamp parse_rfc3339(const std::string& text);

struct CropRefs {
  std::optional<std::string> vehicle;  // relative to the store root
  std::optional<std::string> plate;

  friend bool operator==(const CropRefs&, const CropRefs&) = default;
};

// One detected vehicle joined with its plate evidence. All coordinates are
// in the full-image frame.
struct VehicleRecord {
  std::string record_id;
  std::string image_id;
  std::string source_path;
  Timestamp ingested_at{};
  VehicleCategory category = VehicleCategory::FourWheeler;
  BoundingBox box;
  double detection_score = 0.0;
  std::optional<Quadrilateral> plate_quad;
  std::optional<PlateReading> plate_reading;
  CropRefs crops;

  friend bool operator==(const VehicleRecord&, const VehicleRecord&) = default;
};

/// First 16 hex digits of a 64-bit FNV-1a hash over (image_id, box, category).
std::string make_record_id(const std::string& image_id, const BoundingBox& box, VehicleCategory category);

/// Throws InvalidArgument when reading_present but quad absent, or the quad
/// centre is outside the box.
void validate_record(const VehicleRecord& record);

nlohmann::json reading_to_json(const PlateReading& reading);
PlateReading reading_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const VehicleRecord& record);
/// Throws InvalidArgument (or schema-specific codes) on malformed input.
VehicleRecord record_from_json(const nlohmann::json& j);

}  // namespace platefind
