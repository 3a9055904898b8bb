#include "platefind/record.hpp"

#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <cctype>

#include "platefind/scene.hpp"

namespace platefind {

using nlohmann::json;

std::string format_rfc3339(Timestamp t) {
  const auto secs = std::chrono::floor<std::chrono::seconds>(t);
  const auto millis = (t - secs).count();
  const std::time_t tt = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis));
  return buf;
}

Timestamp parse_rfc3339(const std::string& text) {
  int y, mo, d, h, mi, s;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6) {
    throw Error(ErrorCode::InvalidArgument, "bad RFC 3339 timestamp '" + text + "'");
  }
  std::size_t pos = static_cast<std::size_t>(consumed);
  long millis = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (digits < 3) millis = millis * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    for (; digits < 3; ++digits) millis *= 10;
  }
  long offset = 0;
  if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
    ++pos;
  } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
    int oh = 0, om = 0;
    if (std::sscanf(text.c_str() + pos + 1, "%2d:%2d", &oh, &om) != 2) {
      throw Error(ErrorCode::InvalidArgument, "bad timestamp offset in '" + text + "'");
    }
    offset = (text[pos] == '+' ? 1 : -1) * (oh * 3600L + om * 60L);
    pos += 6;
  } else {
    throw Error(ErrorCode::InvalidArgument, "timestamp '" + text + "' lacks a zone designator");
  }
  if (pos != text.size()) throw Error(ErrorCode::InvalidArgument, "trailing characters in timestamp '" + text + "'");

  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(mo)),
                                        std::chrono::day(static_cast<unsigned>(d))};
  if (!ymd.ok()) throw Error(ErrorCode::InvalidArgument, "invalid date in '" + text + "'");
  const auto day_point = std::chrono::sys_days(ymd);
  return std::chrono::time_point_cast<std::chrono::milliseconds>(day_point) + std::chrono::hours(h) +
         std::chrono::minutes(mi) + std::chrono::seconds(s - offset) + std::chrono::milliseconds(millis);
}

std::string make_record_id(const std::string& image_id, const BoundingBox& box, VehicleCategory category) {
  char coords[160];
  std::snprintf(coords, sizeof coords, "|%.17g,%.17g,%.17g,%.17g|", box.x_min(), box.y_min(), box.x_max(), box.y_max());
  const std::string key = image_id + coords + std::string(canonical_label(category));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, h);
  return hex;
}

void validate_record(const VehicleRecord& record) {
  if (record.record_id.empty()) throw Error(ErrorCode::InvalidArgument, "record_id is empty");
  if (record.plate_reading && !record.plate_quad) {
    throw Error(ErrorCode::InvalidArgument, "record " + record.record_id + " has a plate reading but no quad");
  }
  if (record.plate_quad && !record.box.contains(record.plate_quad->centroid())) {
    throw Error(ErrorCode::InvalidArgument, "record " + record.record_id + " plate centre lies outside its box");
  }
  if (!(record.detection_score >= 0.0 && record.detection_score <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "record " + record.record_id + " detection score outside [0,1]");
  }
}

json reading_to_json(const PlateReading& reading) {
  json chars = json::array();
  for (const PlateChar& c : reading.chars) {
    json alternates = json::array();
    for (const auto& [ch, p] : c.prediction.alternates) alternates.push_back(json::array({std::string(1, ch), p}));
    chars.push_back({{"box", box_to_json(c.box.box)},
                     {"order_index", c.box.order_index},
                     {"char", std::string(1, c.prediction.ch)},
                     {"confidence", c.prediction.confidence},
                     {"alternates", std::move(alternates)},
                     {"adapted", c.adapted}});
  }
  return {{"text", reading.text.str()}, {"plate_confidence", reading.plate_confidence}, {"chars", std::move(chars)}};
}

namespace {

char single_char(const json& j) {
  const std::string s = j.get<std::string>();
  if (s.size() != 1 || !is_plate_char(s[0])) throw Error(ErrorCode::InvalidArgument, "expected one plate character");
  return s[0];
}

}  // namespace

PlateReading reading_from_json(const json& j) {
  PlateReading reading{PlateString(j.at("text").get<std::string>()), {}, j.at("plate_confidence").get<double>()};
  std::string concatenated;
  for (const json& c : j.at("chars")) {
    PlateChar pc;
    pc.box = {box_from_json(c.at("box")), c.at("order_index").get<int>()};
    pc.prediction.ch = single_char(c.at("char"));
    pc.prediction.confidence = c.at("confidence").get<double>();
    for (const json& alt : c.at("alternates")) {
      pc.prediction.alternates.emplace_back(single_char(alt.at(0)), alt.at(1).get<double>());
    }
    pc.adapted = c.at("adapted").get<bool>();
    concatenated.push_back(pc.prediction.ch);
    reading.chars.push_back(std::move(pc));
  }
  if (concatenated != reading.text.str()) {
    throw Error(ErrorCode::InvalidArgument, "plate text does not match its characters");
  }
  return reading;
}

json record_to_json(const VehicleRecord& r) {
  json j = {{"record_id", r.record_id},
            {"image_id", r.image_id},
            {"source_path", r.source_path},
            {"ingested_at", format_rfc3339(r.ingested_at)},
            {"category", canonical_label(r.category)},
            {"box", box_to_json(r.box)},
            {"detection_score", r.detection_score}};
  j["plate_quad"] = r.plate_quad ? quad_to_json(*r.plate_quad) : json(nullptr);
  j["plate_reading"] = r.plate_reading ? reading_to_json(*r.plate_reading) : json(nullptr);
  j["crops"] = {{"vehicle", r.crops.vehicle ? json(*r.crops.vehicle) : json(nullptr)},
                {"plate", r.crops.plate ? json(*r.crops.plate) : json(nullptr)}};
  return j;
}

VehicleRecord record_from_json(const json& j) {
  try {
    VehicleRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.source_path = j.at("source_path").get<std::string>();
    r.ingested_at = parse_rfc3339(j.at("ingested_at").get<std::string>());
    r.category = parse_vehicle_category(j.at("category").get<std::string>());
    r.box = box_from_json(j.at("box"));
    r.detection_score = j.at("detection_score").get<double>();
    if (!j.at("plate_quad").is_null()) r.plate_quad = quad_from_json(j.at("plate_quad"));
    if (!j.at("plate_reading").is_null()) r.plate_reading = reading_from_json(j.at("plate_reading"));
    const json& crops = j.at("crops");
    if (!crops.at("vehicle").is_null()) r.crops.vehicle = crops.at("vehicle").get<std::string>();
    if (!crops.at("plate").is_null()) r.crops.plate = crops.at("plate").get<std::string>();
    validate_record(r);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed record: ") + e.what());
  }
}

}  // namespace platefind
