#include "platefind/store_index.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>

namespace platefind {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void corrupt(std::uint64_t offset, const std::string& what) {
  throw Error(ErrorCode::CorruptStore, "byte offset " + std::to_string(offset) + ": " + what);
}

[[noreturn]] void io_failure(const std::string& what) {
  throw Error(ErrorCode::IoError, what + ": " + std::strerror(errno));
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Holds an exclusive flock for its lifetime.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) io_failure("cannot open lock file " + path.string());
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        io_failure("cannot lock " + path.string());
      }
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

void write_all(int fd, std::string_view bytes, const std::string& what) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_failure(what);
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Crops are written to a temporary name and renamed, so a crash never
// leaves a half-written image under a referenced name.
void write_file_atomically(const fs::path& path, const std::vector<unsigned char>& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_failure("cannot create " + tmp.string());
  try {
    write_all(fd, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), tmp.string());
    if (::fsync(fd) != 0) io_failure("fsync " + tmp.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) io_failure("rename " + tmp.string());
}

std::vector<unsigned char> encode_crop(const cv::Mat& image, const std::string& ext) {
  std::vector<unsigned char> bytes;
  if (!cv::imencode(ext, image, bytes)) throw Error(ErrorCode::IoError, "cannot encode crop as " + ext);
  return bytes;
}

std::string vehicle_crop_ref(const std::string& id) { return "crops/" + id + ".vehicle.jpg"; }
std::string plate_crop_ref(const std::string& id) { return "crops/" + id + ".plate.png"; }

}  // namespace

ParsedStore parse_store_bytes(std::string_view data) {
  ParsedStore out;
  std::vector<VehicleRecord> pending;
  std::uint64_t pending_batch = 0;  // 0: no open batch (ids start at 1)
  std::unordered_set<std::string> ids;
  std::uint64_t pos = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    // A line without its newline is a torn write; it can only be the tail.
    if (nl == std::string_view::npos) break;
    const std::string_view line = data.substr(pos, nl - pos);
    const std::uint64_t line_offset = pos;
    pos = nl + 1;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      corrupt(line_offset, std::string("undecodable line: ") + e.what());
    }
    if (!j.is_object() || !j.contains("v") || j["v"] != kStoreSchemaVersion) {
      corrupt(line_offset, "missing or unsupported schema version");
    }
    if (j.contains("commit")) {
      std::uint64_t batch = 0, count = 0;
      try {
        batch = j.at("commit").get<std::uint64_t>();
        count = j.at("count").get<std::uint64_t>();
      } catch (const json::exception& e) {
        corrupt(line_offset, std::string("malformed commit line: ") + e.what());
      }
      if (count == 0 || pending_batch == 0 || pending_batch != batch || pending.size() != count) {
        corrupt(line_offset, "commit line does not close the preceding batch");
      }
      for (VehicleRecord& r : pending) {
        if (!ids.insert(r.record_id).second) corrupt(line_offset, "duplicate record id " + r.record_id);
        out.records.push_back(std::move(r));
      }
      pending.clear();
      pending_batch = 0;
      out.committed_end = pos;
      ++out.batches;
      continue;
    }
    std::uint64_t batch = 0;
    VehicleRecord record;
    try {
      batch = j.at("batch").get<std::uint64_t>();
      json body = j;
      body.erase("v");
      body.erase("batch");
      record = record_from_json(body);
    } catch (const json::exception& e) {
      corrupt(line_offset, std::string("malformed record: ") + e.what());
    } catch (const Error& e) {
      corrupt(line_offset, std::string("invalid record: ") + e.what());
    }
    if (batch == 0) corrupt(line_offset, "batch id must be positive");
    if (pending_batch != 0 && pending_batch != batch) corrupt(line_offset, "batches interleave");
    pending_batch = batch;
    pending.push_back(std::move(record));
  }
  return out;
}

std::string encode_batch(std::span<const VehicleRecord> records, std::uint64_t batch_id) {
  std::string bytes;
  for (const VehicleRecord& r : records) {
    json j = record_to_json(r);
    j["v"] = kStoreSchemaVersion;
    j["batch"] = batch_id;
    bytes += j.dump();
    bytes += '\n';
  }
  json commit = {{"v", kStoreSchemaVersion}, {"commit", batch_id}, {"count", records.size()}};
  bytes += commit.dump();
  bytes += '\n';
  return bytes;
}

std::vector<VehicleRecord> load_store(const fs::path& root) {
  return parse_store_bytes(read_file_bytes(root / "records.jsonl")).records;
}

RecordStore::RecordStore(fs::path root)
    : root_(std::move(root)), snapshot_(std::make_shared<const std::vector<VehicleRecord>>()) {}

std::unique_ptr<RecordStore> RecordStore::open(const fs::path& root, bool create) {
  std::error_code ec;
  if (create) {
    fs::create_directories(root / "crops", ec);
    if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot create store at " + root.string() + ": " + ec.message());
  } else if (!fs::is_directory(root)) {
    throw Error(ErrorCode::StoreUnavailable, "no store at " + root.string());
  }
  std::unique_ptr<RecordStore> store(new RecordStore(root));
  store->refresh();
  return store;
}

void RecordStore::refresh() {
  auto records = std::make_shared<const std::vector<VehicleRecord>>(load_store(root_));
  std::unique_lock lock(snapshot_mutex_);
  snapshot_ = std::move(records);
}

RecordSnapshot RecordStore::snapshot() const {
  std::shared_lock lock(snapshot_mutex_);
  return snapshot_;
}

std::vector<VehicleRecord> RecordStore::append(std::vector<PendingRecord> batch) {
  if (batch.empty()) return {};
  for (PendingRecord& p : batch) {
    validate_record(p.record);
    p.record.crops = {};
    if (!p.crops.vehicle.empty()) p.record.crops.vehicle = vehicle_crop_ref(p.record.record_id);
    if (!p.crops.plate.empty()) p.record.crops.plate = plate_crop_ref(p.record.record_id);
  }

  std::lock_guard writer(write_mutex_);
  FileLock lock(root_ / ".lock");

  // Another process may have appended since our last read.
  const fs::path path = records_path();
  const std::string existing = read_file_bytes(path);
  ParsedStore state = parse_store_bytes(existing);

  std::unordered_set<std::string> ids;
  for (const VehicleRecord& r : state.records) ids.insert(r.record_id);
  std::set<std::string> in_batch;
  for (const PendingRecord& p : batch) {
    if (ids.count(p.record.record_id) || !in_batch.insert(p.record.record_id).second) {
      throw Error(ErrorCode::DuplicateRecordId, "record " + p.record.record_id + " already stored");
    }
  }

  for (const PendingRecord& p : batch) {
    if (p.record.crops.vehicle) write_file_atomically(root_ / *p.record.crops.vehicle, encode_crop(p.crops.vehicle, ".jpg"));
    if (p.record.crops.plate) write_file_atomically(root_ / *p.record.crops.plate, encode_crop(p.crops.plate, ".png"));
  }

  std::vector<VehicleRecord> records;
  records.reserve(batch.size());
  for (PendingRecord& p : batch) records.push_back(std::move(p.record));
  const std::string bytes = encode_batch(records, state.batches + 1);

  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) io_failure("cannot open " + path.string());
  try {
    // Drop a torn tail left by an interrupted append before adding ours.
    if (existing.size() != state.committed_end &&
        ::ftruncate(fd, static_cast<off_t>(state.committed_end)) != 0) {
      io_failure("truncate " + path.string());
    }
    if (::lseek(fd, static_cast<off_t>(state.committed_end), SEEK_SET) < 0) io_failure("seek " + path.string());
    write_all(fd, bytes, path.string());
    if (::fsync(fd) != 0) io_failure("fsync " + path.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);

  auto next = std::make_shared<std::vector<VehicleRecord>>(std::move(state.records));
  next->insert(next->end(), records.begin(), records.end());
  {
    std::unique_lock snap(snapshot_mutex_);
    snapshot_ = std::move(next);
  }
  return records;
}

std::vector<VehicleRecord> RecordStore::append_records(const std::vector<VehicleRecord>& records) {
  std::vector<PendingRecord> batch;
  batch.reserve(records.size());
  for (const VehicleRecord& r : records) batch.push_back({r, {}});
  return append(std::move(batch));
}

std::optional<fs::path> RecordStore::crop_file(const std::string& ref) const {
  // Only references this store hands out are served.
  if (ref.rfind("crops/", 0) != 0 || ref.find("..") != std::string::npos || ref.find('/', 6) != std::string::npos) {
    return std::nullopt;
  }
  fs::path p = root_ / ref;
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  return p;
}

std::optional<VehicleRecord> RecordStore::find(const std::string& record_id) const {
  const RecordSnapshot snap = snapshot();
  for (const VehicleRecord& r : *snap) {
    if (r.record_id == record_id) return r;
  }
  return std::nullopt;
}

std::vector<VehicleRecord> RecordStore::scan(const std::function<bool(const VehicleRecord&)>& predicate) const {
  const RecordSnapshot snap = snapshot();
  std::vector<VehicleRecord> out;
  for (const VehicleRecord& r : *snap) {
    if (predicate(r)) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

json report_to_json(const IngestReport& report) {
  json failures = json::array();
  for (const StageFailure& f : report.failures) {
    json j = {{"stage", f.stage}, {"code", std::string(error_code_name(f.code))}, {"message", f.message}};
    j["record_id"] = f.record_id ? json(*f.record_id) : json(nullptr);
    failures.push_back(std::move(j));
  }
  return {{"image_id", report.image_id},
          {"vehicles_found", report.vehicles_found},
          {"plates_read", report.plates_read},
          {"failures", std::move(failures)}};
}

cv::Point crop_origin(const BoundingBox& box) { return pixel_extent(box).tl(); }

namespace {

StageFailure failure_from(std::string_view stage, const std::exception& e, std::optional<std::string> record_id) {
  StageFailure f;
  f.stage = std::string(stage);
  f.record_id = std::move(record_id);
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    f.code = err->code();
    f.message = err->detail();
  } else {
    f.code = ErrorCode::BackendFailure;
    f.message = e.what();
  }
  return f;
}

}  // namespace

IngestResult ingest_image(const cv::Mat& image, const ImageSource& source, const PipelineBackends& backends,
                          const PipelineConfig& config) {
  if (!backends.detector || !backends.plate_map || !backends.classifier) {
    throw Error(ErrorCode::InvalidArgument, "pipeline backends must all be set");
  }
  IngestResult result;
  result.report.image_id = source.image_id;
  const Timestamp now = source.ingested_at.value_or(
      std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now()));

  std::vector<VehicleDetection> detections;
  try {
    detections = detect_vehicles(image, *backends.detector, config.score_threshold);
  } catch (const std::exception& e) {
    result.report.failures.push_back(failure_from(kStageVehicleDetection, e, std::nullopt));
    return result;
  }
  result.report.vehicles_found = detections.size();

  // Smallest detection containing a point; plates bind to it.
  auto owner_of = [&](Point p) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (!detections[i].box.contains(p)) continue;
      if (!best || detections[i].box.area() < detections[*best].box.area()) best = i;
    }
    return best;
  };

  for (std::size_t i = 0; i < detections.size(); ++i) {
    const VehicleDetection& det = detections[i];
    PendingRecord pending;
    VehicleRecord& rec = pending.record;
    rec.record_id = make_record_id(source.image_id, det.box, det.category);
    rec.image_id = source.image_id;
    rec.source_path = source.source_path;
    rec.ingested_at = now;
    rec.category = det.category;
    rec.box = det.box;
    rec.detection_score = det.score;

    const cv::Rect extent = pixel_extent(det.box) & cv::Rect(0, 0, image.cols, image.rows);
    const cv::Mat crop = image(extent);
    pending.crops.vehicle = crop.clone();

    std::optional<RectifiedPlate> bound;
    try {
      const RegionContext ctx{extent.tl(), det.box};
      std::vector<RectifiedPlate> plates = localize_plate(crop, *backends.plate_map, config.localization, ctx);
      // localize_plate returns plates by descending score.
      for (RectifiedPlate& p : plates) {
        const Quadrilateral full = p.source_quad.translated(extent.x, extent.y);
        if (owner_of(full.centroid()) == i) {
          p.source_quad = full;
          bound = std::move(p);
          break;
        }
      }
      if (!bound) throw Error(ErrorCode::NoPlateFound, "no plate bound to this vehicle");
    } catch (const std::exception& e) {
      result.report.failures.push_back(failure_from(kStagePlateLocalization, e, rec.record_id));
    }

    if (bound) {
      rec.plate_quad = bound->source_quad;
      pending.crops.plate = bound->image;
      try {
        rec.plate_reading = read_plate(bound->image, *backends.classifier, config.ocr);
        ++result.report.plates_read;
      } catch (const std::exception& e) {
        result.report.failures.push_back(failure_from(kStagePlateOcr, e, rec.record_id));
      }
    }
    result.records.push_back(std::move(pending));
  }
  return result;
}

cv::Mat decode_image(std::span<const unsigned char> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::UndecodableImage, "empty image payload");
  const bool jpeg = bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
  const bool png = bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0;
  if (!jpeg && !png) throw Error(ErrorCode::UndecodableImage, "payload is neither JPEG nor PNG");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<unsigned char*>(bytes.data()));
  cv::Mat image;
  try {
    image = cv::imdecode(raw, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::UndecodableImage, e.what());
  }
  if (image.empty()) throw Error(ErrorCode::UndecodableImage, "image data is corrupt");
  return image;
}

cv::Mat decode_image_file(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.empty()) throw Error(ErrorCode::UndecodableImage, "cannot read " + path.string());
  try {
    return decode_image(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
  } catch (const Error& e) {
    throw Error(ErrorCode::UndecodableImage, path.string() + ": " + e.detail());
  }
}

}  // namespace platefind
