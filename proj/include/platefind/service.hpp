#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "platefind/config.hpp"
#include "platefind/query_match.hpp"
#include "platefind/store_index.hpp"

namespace httplib {
class Server;
}

namespace platefind {

inline constexpr std::string_view kApiPrefix = "/api/v1";
inline constexpr std::size_t kDefaultSearchLimit = 20;
inline constexpr std::size_t kMaxSearchLimit = 500;
inline constexpr std::size_t kDefaultPageSize = 100;
inline constexpr std::size_t kMaxPageSize = 500;

/// HTTP status for an error code (400, 404, 409, 415, 503 or 500).
int http_status_for(ErrorCode code);

struct FieldError {
  std::string field;
  ErrorCode code;
  std::string message;
};

// A request the API refuses. Carries every field problem found.
class ApiError : public std::runtime_error {
 public:
  ApiError(ErrorCode code, std::string message, std::vector<FieldError> fields = {});
  ErrorCode code() const noexcept { return code_; }
  const std::vector<FieldError>& fields() const noexcept { return fields_; }
  nlohmann::json to_json() const;

 private:
  ErrorCode code_;
  std::vector<FieldError> fields_;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

ApiResponse error_response(const ApiError& error);
ApiResponse error_response(ErrorCode code, const std::string& message);

struct ApiSearchRequest {
  SearchQuery query;
  std::size_t limit = kDefaultSearchLimit;
  std::optional<std::string> image_id;  // single-image check when set
};

/// Validates {"type", "plate", "fuzz"?, "limit"?, "image_id"?}; throws ApiError listing
/// every bad field (UnknownCategory, EmptyPlate, InvalidFuzz, InvalidLimit,
/// MalformedRequest).
ApiSearchRequest parse_search_request(const nlohmann::json& body, double default_fuzz);

std::string crop_url(const std::string& record_id, std::string_view kind);
nlohmann::json record_api_json(const VehicleRecord& record);
nlohmann::json search_response_json(const ApiSearchRequest& request, const SearchResult& result);

// Chooses the detection and plate-map backends for one image.
class BackendProvider {
 public:
  explicit BackendProvider(DetectorMode mode) : mode_(mode) {}

  struct Backends {
    std::shared_ptr<const DetectorBackend> detector;
    std::shared_ptr<const PlateMapBackend> plate_map;
  };

  /// `scene_json` is the sidecar content when one exists. Throws
  /// InvalidArgument in scene mode without a sidecar.
  Backends for_image(const std::optional<std::string>& scene_json) const;

  /// Sidecar of an image file: same stem with ".scene.json".
  static std::filesystem::path sidecar_path(const std::filesystem::path& image);

 private:
  DetectorMode mode_;
  mutable std::once_flag reference_once_;
  mutable Backends reference_;
};

struct IngestOutcome {
  IngestReport report;
  std::vector<VehicleRecord> stored;
  std::optional<ErrorCode> append_error;  // DuplicateRecordId etc.; nothing stored then
  std::string append_message;
};

nlohmann::json ingest_outcome_json(const IngestOutcome& outcome);

// Request handling, independent of the HTTP transport.
class Service {
 public:
  /// The store is opened (and, if asked, created) eagerly; on failure the service still
  /// starts and answers store-backed requests with 503.
  Service(ServiceConfig config, std::shared_ptr<const CharClassifier> classifier,
          std::optional<ConfusionTable> table = std::nullopt, bool create_store = true);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }
  RecordStore* store() const noexcept { return store_.get(); }
  const ConfusionTable& table() const noexcept { return table_; }

  // Library entry points (throw platefind::Error).
  IngestOutcome ingest_decoded(const cv::Mat& image, const ImageSource& source,
                               const std::optional<std::string>& scene_json);
  IngestOutcome ingest_file(const std::filesystem::path& path);

  // HTTP-shaped entry points (never throw).
  ApiResponse handle_search(std::string_view body) const;
  ApiResponse handle_ingest_json(std::string_view body);
  ApiResponse handle_ingest_upload(const std::string& bytes, const std::string& image_id,
                                   const std::optional<std::string>& scene_json);
  ApiResponse handle_job(const std::string& job_id) const;
  ApiResponse handle_records(const std::optional<std::string>& offset, const std::optional<std::string>& count,
                             const std::optional<std::string>& type) const;
  ApiResponse handle_crop(const std::string& record_id, const std::string& kind) const;
  ApiResponse handle_health() const;

  /// Blocks until queued async ingests have finished (tests and shutdown).
  void drain_jobs();

 private:
  struct Job {
    std::string status = "queued";  // queued | running | done | failed
    std::optional<ApiResponse> result;
  };

  ApiResponse run_ingest(const std::function<IngestOutcome()>& work);
  ApiResponse submit(std::function<IngestOutcome()> work);
  void worker_loop();
  RecordStore& require_store() const;

  ServiceConfig config_;
  std::shared_ptr<const CharClassifier> classifier_;
  ConfusionTable table_;
  std::unique_ptr<RecordStore> store_;
  std::string store_error_;
  BackendProvider backends_;

  mutable std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::pair<std::string, std::function<IngestOutcome()>>> queue_;
  std::size_t in_flight_ = 0;
  std::uint64_t next_job_ = 1;
  bool stopping_ = false;
  std::thread worker_;
};

/// Registers every /api/v1 route on the server.
void mount_routes(httplib::Server& server, Service& service);

}  // namespace platefind
