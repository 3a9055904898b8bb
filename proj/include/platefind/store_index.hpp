#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "platefind/plate_localization.hpp"
#include "platefind/plate_ocr.hpp"
#include "platefind/record.hpp"
#include "platefind/vehicle_detection.hpp"

namespace platefind {

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kStoreSchemaVersion = 1;

// Record lines carry "v" and "batch"; each batch ends with a commit line
// {"v":1,"commit":<batch>,"count":<n>}. Records of a batch without its
// commit line are a torn append and are not visible.
struct ParsedStore {
  std::vector<VehicleRecord> records;
  std::uint64_t committed_end = 0;  // byte offset just past the last commit line
  std::uint64_t batches = 0;
};

/// Throws CorruptStore (message carries "byte offset N") on an undecodable
/// complete line, a commit that does not close its batch, interleaved
/// batches, or a duplicate record id.
ParsedStore parse_store_bytes(std::string_view data);

/// Bytes of one committed batch, as append() writes them.
std::string encode_batch(std::span<const VehicleRecord> records, std::uint64_t batch_id);

/// Reads <root>/records.jsonl; a missing file is an empty store.
std::vector<VehicleRecord> load_store(const std::filesystem::path& root);

struct CropImages {
  cv::Mat vehicle;  // stored as JPEG when non-empty
  cv::Mat plate;    // rectified plate, stored as PNG when non-empty
};

struct PendingRecord {
  VehicleRecord record;
  CropImages crops;
};

using RecordSnapshot = std::shared_ptr<const std::vector<VehicleRecord>>;

// Storage seam; the file store below is the only implementation.
class RecordRepository {
 public:
  virtual ~RecordRepository() = default;
  /// All-or-nothing. Throws DuplicateRecordId before anything is written.
  virtual std::vector<VehicleRecord> append(std::vector<PendingRecord> batch) = 0;
  /// Immutable view of every committed record in ingestion order.
  virtual RecordSnapshot snapshot() const = 0;
  /// Absolute path of a crop reference, or nullopt if it does not exist.
  virtual std::optional<std::filesystem::path> crop_file(const std::string& ref) const = 0;
};

// Append-only JSON-lines store with a crop directory. One writer at a time
// (an advisory lock on <root>/.lock); readers work from snapshots.
class RecordStore final : public RecordRepository {
 public:
  /// Creates the layout when `create` is set; otherwise throws
  /// StoreUnavailable if the root does not exist. Throws CorruptStore if the
  /// existing file does not parse.
  static std::unique_ptr<RecordStore> open(const std::filesystem::path& root, bool create = true);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path records_path() const { return root_ / "records.jsonl"; }

  std::vector<VehicleRecord> append(std::vector<PendingRecord> batch) override;
  /// Crop-free convenience wrapper.
  std::vector<VehicleRecord> append_records(const std::vector<VehicleRecord>& records);

  RecordSnapshot snapshot() const override;
  std::optional<std::filesystem::path> crop_file(const std::string& ref) const override;

  /// Re-reads the file, e.g. after another process appended.
  void refresh();

  std::size_t size() const { return snapshot()->size(); }
  std::optional<VehicleRecord> find(const std::string& record_id) const;
  /// Records satisfying the predicate, in ingestion order.
  std::vector<VehicleRecord> scan(const std::function<bool(const VehicleRecord&)>& predicate) const;

 private:
  explicit RecordStore(std::filesystem::path root);

  std::filesystem::path root_;
  std::mutex write_mutex_;
  mutable std::shared_mutex snapshot_mutex_;
  RecordSnapshot snapshot_;
};

// ---------------------------------------------------------------------------
// Ingestion

inline constexpr std::string_view kStageVehicleDetection = "vehicle_detection";
inline constexpr std::string_view kStagePlateLocalization = "plate_localization";
inline constexpr std::string_view kStagePlateOcr = "plate_ocr";

struct PipelineConfig {
  double score_threshold = 0.5;
  LocalizationConfig localization;
  OcrConfig ocr;
};

struct PipelineBackends {
  const DetectorBackend* detector = nullptr;
  const PlateMapBackend* plate_map = nullptr;
  const CharClassifier* classifier = nullptr;
};

struct ImageSource {
  std::string image_id;
  std::string source_path;
  std::optional<Timestamp> ingested_at;  // now when absent
};

struct StageFailure {
  std::string stage;
  ErrorCode code = ErrorCode::BackendFailure;
  std::string message;
  std::optional<std::string> record_id;  // absent for image-level failures
};

struct IngestReport {
  std::string image_id;
  std::size_t vehicles_found = 0;
  std::size_t plates_read = 0;
  std::vector<StageFailure> failures;
};

nlohmann::json report_to_json(const IngestReport& report);

struct IngestResult {
  std::vector<PendingRecord> records;
  IngestReport report;
};

/// Detect -> localize within each vehicle crop -> read. A plate is bound to
/// the smallest detected box containing its centre; the top-scored bound
/// plate is kept. Per-vehicle and per-stage failures go to the report.
IngestResult ingest_image(const cv::Mat& image, const ImageSource& source, const PipelineBackends& backends,
                          const PipelineConfig& config = {});

/// JPEG/PNG decoding; throws UndecodableImage.
cv::Mat decode_image(std::span<const unsigned char> bytes);
cv::Mat decode_image_file(const std::filesystem::path& path);

/// Origin of a record's vehicle crop in the full image.
cv::Point crop_origin(const BoundingBox& box);

}  // namespace platefind
