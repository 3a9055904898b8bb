#include "platefind/service.hpp"

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "platefind/reference_backends.hpp"

namespace platefind {

using nlohmann::json;
namespace fs = std::filesystem;

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyPlate:
    case ErrorCode::UnknownCategory:
    case ErrorCode::InvalidArgument:
    case ErrorCode::MalformedRequest:
    case ErrorCode::InvalidFuzz:
    case ErrorCode::InvalidLimit:
    case ErrorCode::InvalidPagination: return 400;
    case ErrorCode::RecordNotFound:
    case ErrorCode::CropNotFound:
    case ErrorCode::JobNotFound:
    case ErrorCode::UnknownEndpoint: return 404;
    case ErrorCode::DuplicateRecordId: return 409;
    case ErrorCode::UndecodableImage: return 415;
    case ErrorCode::StoreUnavailable:
    case ErrorCode::CorruptStore: return 503;
    default: return 500;
  }
}

ApiError::ApiError(ErrorCode code, std::string message, std::vector<FieldError> fields)
    : std::runtime_error(std::move(message)), code_(code), fields_(std::move(fields)) {}

json ApiError::to_json() const {
  json out = {{"error", {{"code", std::string(error_code_name(code_))}, {"message", what()}}}};
  if (!fields_.empty()) {
    json fields = json::array();
    for (const FieldError& f : fields_) {
      fields.push_back({{"field", f.field}, {"code", std::string(error_code_name(f.code))}, {"message", f.message}});
    }
    out["error"]["fields"] = std::move(fields);
  }
  return out;
}

ApiResponse error_response(const ApiError& error) {
  return {http_status_for(error.code()), "application/json", error.to_json().dump()};
}

ApiResponse error_response(ErrorCode code, const std::string& message) {
  return error_response(ApiError(code, message));
}

namespace {

ApiResponse json_response(const json& body, int status = 200) { return {status, "application/json", body.dump()}; }

ApiResponse response_for_exception(const std::exception& e) {
  if (const auto* api = dynamic_cast<const ApiError*>(&e)) return error_response(*api);
  if (const auto* err = dynamic_cast<const Error*>(&e)) return error_response(err->code(), err->detail());
  return error_response(ErrorCode::BackendFailure, e.what());
}

json parse_body(std::string_view body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ApiError(ErrorCode::MalformedRequest, "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ApiError(ErrorCode::MalformedRequest, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::optional<std::size_t> parse_index(const std::string& text) {
  if (text.empty() || text.size() > 9) return std::nullopt;
  std::size_t v = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

}  // namespace

ApiSearchRequest parse_search_request(const json& body, double default_fuzz) {
  if (!body.is_object()) throw ApiError(ErrorCode::MalformedRequest, "request body must be a JSON object");
  std::vector<FieldError> errors;
  ApiSearchRequest req;

  if (!body.contains("type") || !body["type"].is_string()) {
    errors.push_back({"type", ErrorCode::UnknownCategory, "type must be one of the vehicle category labels"});
  } else {
    try {
      req.query.category = parse_vehicle_category(body["type"].get<std::string>());
    } catch (const Error& e) {
      errors.push_back({"type", ErrorCode::UnknownCategory, e.detail()});
    }
  }

  if (!body.contains("plate") || !body["plate"].is_string()) {
    errors.push_back({"plate", ErrorCode::EmptyPlate, "plate must be a non-empty string"});
  } else {
    try {
      req.query.plate = normalize_plate_string(body["plate"].get<std::string>());
    } catch (const Error& e) {
      errors.push_back({"plate", ErrorCode::EmptyPlate, e.detail()});
    }
  }

  req.query.fuzz_budget = default_fuzz;
  if (body.contains("fuzz") && !body["fuzz"].is_null()) {
    const json& f = body["fuzz"];
    if (!f.is_number() || !std::isfinite(f.get<double>()) || f.get<double>() < 0) {
      errors.push_back({"fuzz", ErrorCode::InvalidFuzz, "fuzz must be a finite number >= 0"});
    } else {
      req.query.fuzz_budget = f.get<double>();
    }
  }

  if (body.contains("limit") && !body["limit"].is_null()) {
    const json& l = body["limit"];
    if (!l.is_number_integer() || l.get<std::int64_t>() < 1 ||
        l.get<std::int64_t>() > static_cast<std::int64_t>(kMaxSearchLimit)) {
      errors.push_back({"limit", ErrorCode::InvalidLimit, "limit must be an integer in [1, 500]"});
    } else {
      req.limit = l.get<std::size_t>();
    }
  }

  if (body.contains("image_id") && !body["image_id"].is_null()) {
    const json& i = body["image_id"];
    if (!i.is_string() || i.get<std::string>().empty()) {
      errors.push_back({"image_id", ErrorCode::MalformedRequest, "image_id must be a non-empty string"});
    } else {
      req.image_id = i.get<std::string>();
    }
  }

  if (!errors.empty()) {
    const ErrorCode code = errors.front().code;
    const std::string message = errors.front().message;
    throw ApiError(code, message, std::move(errors));
  }
  return req;
}

std::string crop_url(const std::string& record_id, std::string_view kind) {
  return std::string(kApiPrefix) + "/crops/" + record_id + "/" + std::string(kind);
}

namespace {

json crop_urls_json(const VehicleRecord& r) {
  return {{"vehicle", r.crops.vehicle ? json(crop_url(r.record_id, "vehicle")) : json(nullptr)},
          {"plate", r.crops.plate ? json(crop_url(r.record_id, "plate")) : json(nullptr)}};
}

}  // namespace

json record_api_json(const VehicleRecord& record) {
  json j = record_to_json(record);
  j["category_label"] = std::string(canonical_label(record.category));
  j["crop_urls"] = crop_urls_json(record);
  return j;
}

json search_response_json(const ApiSearchRequest& request, const SearchResult& result) {
  json matches = json::array();
  for (const MatchResult& m : result.matches) {
    const VehicleRecord& r = m.record;
    matches.push_back({{"record_id", r.record_id},
                       {"distance", m.plate_distance},
                       {"category", std::string(canonical_label(r.category))},
                       {"plate_text", r.plate_reading ? json(r.plate_reading->text.str()) : json(nullptr)},
                       {"plate_confidence", r.plate_reading ? json(r.plate_reading->plate_confidence) : json(nullptr)},
                       {"detection_score", r.detection_score},
                       {"image_id", r.image_id},
                       {"crop_urls", crop_urls_json(r)}});
  }
  json echo = {{"type", std::string(canonical_label(request.query.category))},
               {"plate", request.query.plate.str()},
               {"fuzz", request.query.fuzz_budget},
               {"limit", request.limit}};
  if (request.image_id) echo["image_id"] = *request.image_id;
  return {{"verdict", std::string(verdict_name(result.verdict))}, {"matches", std::move(matches)}, {"query_echo", echo}};
}

// ---------------------------------------------------------------------------

fs::path BackendProvider::sidecar_path(const fs::path& image) {
  fs::path p = image;
  p.replace_extension(".scene.json");
  return p;
}

BackendProvider::Backends BackendProvider::for_image(const std::optional<std::string>& scene_json) const {
  const bool use_scene = mode_ == DetectorMode::Scene || (mode_ == DetectorMode::Auto && scene_json);
  if (use_scene) {
    if (!scene_json) throw Error(ErrorCode::InvalidArgument, "scene detector mode needs a scene description");
    const SceneSpec scene = scene_from_json(json::parse(*scene_json));
    return {mock_backend_from_scene(scene), std::make_shared<MockPlateMapBackend>(scene)};
  }
  std::call_once(reference_once_, [this] {
    reference_.detector = std::make_shared<ReferenceVehicleBackend>(ReferenceVehicleBackend::train());
    reference_.plate_map = std::make_shared<ReferencePlateMapBackend>();
  });
  return reference_;
}

json ingest_outcome_json(const IngestOutcome& outcome) {
  json ids = json::array();
  for (const VehicleRecord& r : outcome.stored) ids.push_back(r.record_id);
  json out = {{"report", report_to_json(outcome.report)}, {"record_ids", std::move(ids)}};
  if (outcome.append_error) {
    out["error"] = {{"code", std::string(error_code_name(*outcome.append_error))},
                    {"message", outcome.append_message}};
  }
  return out;
}

// ---------------------------------------------------------------------------

Service::Service(ServiceConfig config, std::shared_ptr<const CharClassifier> classifier,
                 std::optional<ConfusionTable> table, bool create_store)
    : config_(std::move(config)),
      classifier_(std::move(classifier)),
      table_(table ? std::move(*table)
                   : (config_.confusion_table ? ConfusionTable::load(*config_.confusion_table)
                                              : ConfusionTable::default_table())),
      backends_(config_.detector) {
  try {
    store_ = RecordStore::open(config_.store, create_store);
  } catch (const Error& e) {
    store_error_ = e.what();
  }
  if (config_.async_ingest) worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

RecordStore& Service::require_store() const {
  if (!store_) throw Error(ErrorCode::StoreUnavailable, store_error_.empty() ? "store is not open" : store_error_);
  return *store_;
}

IngestOutcome Service::ingest_decoded(const cv::Mat& image, const ImageSource& source,
                                      const std::optional<std::string>& scene_json) {
  RecordStore& store = require_store();
  if (!classifier_) throw Error(ErrorCode::ModelFailure, "no OCR model is loaded");
  const BackendProvider::Backends b = backends_.for_image(scene_json);
  const PipelineBackends pipeline{b.detector.get(), b.plate_map.get(), classifier_.get()};
  IngestResult result = ingest_image(image, source, pipeline, config_.pipeline);
  IngestOutcome outcome;
  outcome.report = std::move(result.report);
  try {
    outcome.stored = store.append(std::move(result.records));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DuplicateRecordId) throw;
    outcome.append_error = e.code();
    outcome.append_message = e.detail();
  }
  return outcome;
}

IngestOutcome Service::ingest_file(const fs::path& path) {
  const cv::Mat image = decode_image_file(path);
  std::optional<std::string> scene;
  const fs::path sidecar = BackendProvider::sidecar_path(path);
  if (fs::is_regular_file(sidecar)) scene = read_text_file(sidecar);
  ImageSource source{path.filename().string(), fs::absolute(path).lexically_normal().string(), std::nullopt};
  return ingest_decoded(image, source, scene);
}

ApiResponse Service::run_ingest(const std::function<IngestOutcome()>& work) {
  try {
    const IngestOutcome outcome = work();
    const int status = outcome.append_error ? http_status_for(*outcome.append_error) : 200;
    return json_response(ingest_outcome_json(outcome), status);
  } catch (const std::exception& e) {
    return response_for_exception(e);
  }
}

ApiResponse Service::submit(std::function<IngestOutcome()> work) {
  if (!config_.async_ingest) return run_ingest(work);
  std::string id;
  {
    std::lock_guard lock(jobs_mutex_);
    id = "job-" + std::to_string(next_job_++);
    jobs_[id] = Job{};
    queue_.emplace_back(id, std::move(work));
  }
  jobs_cv_.notify_all();
  return json_response({{"job_id", id}, {"status", "queued"}, {"url", std::string(kApiPrefix) + "/jobs/" + id}}, 202);
}

void Service::worker_loop() {
  std::unique_lock lock(jobs_mutex_);
  for (;;) {
    jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;  // stopping with nothing left
    auto [id, work] = std::move(queue_.front());
    queue_.pop_front();
    ++in_flight_;
    jobs_[id].status = "running";
    lock.unlock();
    ApiResponse response = run_ingest(work);
    lock.lock();
    jobs_[id].status = response.status < 300 ? "done" : "failed";
    jobs_[id].result = std::move(response);
    --in_flight_;
    jobs_cv_.notify_all();
  }
}

void Service::drain_jobs() {
  std::unique_lock lock(jobs_mutex_);
  jobs_cv_.wait(lock, [this] { return queue_.empty() && in_flight_ == 0; });
}

ApiResponse Service::handle_search(std::string_view body) const {
  try {
    const ApiSearchRequest req = parse_search_request(parse_body(body), config_.fuzz);
    const RecordSnapshot snap = require_store().snapshot();
    if (req.image_id) {
      std::vector<VehicleRecord> one_image;
      for (const VehicleRecord& r : *snap)
        if (r.image_id == *req.image_id) one_image.push_back(r);
      return json_response(search_response_json(req, search(req.query, one_image, table_, req.limit)));
    }
    const SearchResult result = search(req.query, *snap, table_, req.limit);
    return json_response(search_response_json(req, result));
  } catch (const std::exception& e) {
    return response_for_exception(e);
  }
}

ApiResponse Service::handle_ingest_json(std::string_view body) {
  try {
    const json j = parse_body(body);
    if (!j.contains("path") || !j["path"].is_string() || j["path"].get<std::string>().empty()) {
      throw ApiError(ErrorCode::MalformedRequest, "ingest body needs a \"path\" string",
                     {{"path", ErrorCode::MalformedRequest, "required"}});
    }
    const fs::path path = j["path"].get<std::string>();
    require_store();
    return submit([this, path] { return ingest_file(path); });
  } catch (const std::exception& e) {
    return response_for_exception(e);
  }
}

ApiResponse Service::handle_ingest_upload(const std::string& bytes, const std::string& image_id,
                                          const std::optional<std::string>& scene_json) {
  try {
    if (image_id.empty()) throw ApiError(ErrorCode::MalformedRequest, "upload needs an image_id or a file name");
    require_store();
    // Decode before queueing so a bad payload is answered with 415 at once.
    const cv::Mat image =
        decode_image(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
    if (scene_json) {
      try {
        (void)scene_from_json(json::parse(*scene_json));
      } catch (const std::exception& e) {
        throw ApiError(ErrorCode::MalformedRequest, std::string("scene is invalid: ") + e.what(),
                       {{"scene", ErrorCode::MalformedRequest, e.what()}});
      }
    }
    ImageSource source{image_id, "upload:" + image_id, std::nullopt};
    return submit([this, image, source, scene_json] { return ingest_decoded(image, source, scene_json); });
  } catch (const std::exception& e) {
    return response_for_exception(e);
  }
}

ApiResponse Service::handle_job(const std::string& job_id) const {
  std::lock_guard lock(jobs_mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return error_response(ErrorCode::JobNotFound, "no job " + job_id);
  json out = {{"job_id", job_id}, {"status", it->second.status}};
  if (it->second.result) {
    out["http_status"] = it->second.result->status;
    out["result"] = it->second.result->json();
  }
  return json_response(out);
}

ApiResponse Service::handle_records(const std::optional<std::string>& offset_text,
                                    const std::optional<std::string>& count_text,
                                    const std::optional<std::string>& type) const {
  try {
    std::vector<FieldError> errors;
    std::size_t offset = 0, count = kDefaultPageSize;
    if (offset_text) {
      const auto v = parse_index(*offset_text);
      if (!v) errors.push_back({"offset", ErrorCode::InvalidPagination, "offset must be a non-negative integer"});
      else offset = *v;
    }
    if (count_text) {
      const auto v = parse_index(*count_text);
      if (!v || *v < 1 || *v > kMaxPageSize) {
        errors.push_back({"count", ErrorCode::InvalidPagination, "count must be an integer in [1, 500]"});
      } else {
        count = *v;
      }
    }
    std::optional<VehicleCategory> category;
    if (type) {
      try {
        category = parse_vehicle_category(*type);
      } catch (const Error& e) {
        errors.push_back({"type", ErrorCode::UnknownCategory, e.detail()});
      }
    }
    if (!errors.empty()) {
      const ErrorCode code = errors.front().code;
      const std::string message = errors.front().message;
      throw ApiError(code, message, std::move(errors));
    }

    const RecordSnapshot snap = require_store().snapshot();
    std::vector<const VehicleRecord*> view;
    for (const VehicleRecord& r : *snap) {
      if (!category || r.category == *category) view.push_back(&r);
    }
    json records = json::array();
    for (std::size_t i = offset; i < view.size() && i < offset + count; ++i) records.push_back(record_api_json(*view[i]));
    json out = {{"offset", offset}, {"count", records.size()}, {"total", view.size()}, {"records", std::move(records)}};
    out["next_offset"] = offset + count < view.size() ? json(offset + count) : json(nullptr);
    return json_response(out);
  } catch (const std::exception& e) {
    return response_for_exception(e);
  }
}

ApiResponse Service::handle_crop(const std::string& record_id, const std::string& kind) const {
  try {
    if (kind != "vehicle" && kind != "plate") {
      return error_response(ErrorCode::CropNotFound, "crop kind must be vehicle or plate");
    }
    const RecordStore& store = require_store();
    const std::optional<VehicleRecord> record = store.find(record_id);
    if (!record) return error_response(ErrorCode::RecordNotFound, "no record " + record_id);
    const std::optional<std::string>& ref = kind == "vehicle" ? record->crops.vehicle : record->crops.plate;
    const std::optional<fs::path> file = ref ? store.crop_file(*ref) : std::nullopt;
    if (!file) return error_response(ErrorCode::CropNotFound, "record " + record_id + " has no " + kind + " crop");
    return {200, kind == "vehicle" ? "image/jpeg" : "image/png", read_text_file(*file)};
  } catch (const std::exception& e) {
    return response_for_exception(e);
  }
}

ApiResponse Service::handle_health() const {
  json out = {{"status", store_ ? "ok" : "degraded"}, {"ocr_model", classifier_ ? json(classifier_->name()) : json(nullptr)}};
  out["records"] = store_ ? json(store_->size()) : json(nullptr);
  const int status = store_ ? 200 : 503;
  return json_response(out, status);
}

// ---------------------------------------------------------------------------

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

std::optional<std::string> param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

}  // namespace

void mount_routes(httplib::Server& server, Service& service) {
  const std::string p(kApiPrefix);
  server.Post(p + "/search", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.handle_search(req.body));
  });
  server.Post(p + "/ingest", [&service](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      send(res, service.handle_ingest_json(req.body));
      return;
    }
    if (!req.has_file("image")) {
      send(res, error_response(ApiError(ErrorCode::MalformedRequest, "multipart ingest needs an \"image\" part",
                                        {{"image", ErrorCode::MalformedRequest, "required"}})));
      return;
    }
    const httplib::MultipartFormData image = req.get_file_value("image");
    std::string image_id = image.filename;
    if (req.has_file("image_id")) image_id = req.get_file_value("image_id").content;
    std::optional<std::string> scene;
    if (req.has_file("scene")) scene = req.get_file_value("scene").content;
    send(res, service.handle_ingest_upload(image.content, image_id, scene));
  });
  server.Get(p + "/jobs/:id", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.handle_job(req.path_params.at("id")));
  });
  server.Get(p + "/records", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.handle_records(param(req, "offset"), param(req, "count"), param(req, "type")));
  });
  server.Get(p + "/crops/:id/:kind", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.handle_crop(req.path_params.at("id"), req.path_params.at("kind")));
  });
  server.Get(p + "/health", [&service](const httplib::Request&, httplib::Response& res) {
    send(res, service.handle_health());
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      res.set_content(ApiError(ErrorCode::UnknownEndpoint, "no such endpoint").to_json().dump(), "application/json");
    }
  });
}

}  // namespace platefind
