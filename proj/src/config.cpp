#include "platefind/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace platefind {

namespace {

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(ErrorCode::InvalidArgument,
              "config " + std::string(key) + "=" + std::string(value) + ": " + std::string(why));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front()) {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) bad(key, value, "expected a number");
  return v;
}

int parse_int(std::string_view key, std::string_view value) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad(key, value, "expected an integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  std::string s(value);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  bad(key, value, "expected a boolean");
}

double unit_interval(std::string_view key, std::string_view value, bool open_low, bool open_high) {
  const double v = parse_double(key, value);
  if ((open_low ? v <= 0 : v < 0) || (open_high ? v >= 1 : v > 1)) bad(key, value, "out of range");
  return v;
}

}  // namespace

const std::map<std::string, std::string>& config_key_help() {
  static const std::map<std::string, std::string> keys = {
      {"store", "store root directory"},
      {"ocr_model", "trained OCR model file"},
      {"confusion_table", "confusion table JSON file"},
      {"detector", "auto | scene | reference"},
      {"score_threshold", "minimum vehicle detection score, [0,1]"},
      {"prob_threshold", "plate map cell probability threshold, (0,1]"},
      {"nms_iou", "plate NMS IoU threshold, [0,1)"},
      {"adapt_threshold", "OCR confidence below which the adaptive pass may revise, [0,1]"},
      {"fuzz", "default search fuzz budget, >= 0"},
      {"async_ingest", "answer ingest with 202 and a job id"},
      {"host", "HTTP bind address"},
      {"port", "HTTP port"},
  };
  return keys;
}

std::string_view detector_mode_name(DetectorMode mode) {
  switch (mode) {
    case DetectorMode::Auto: return "auto";
    case DetectorMode::Scene: return "scene";
    case DetectorMode::Reference: return "reference";
  }
  return "auto";
}

void ServiceConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  if (key == "store") {
    if (value.empty()) bad(key, value, "must not be empty");
    store = value;
  } else if (key == "ocr_model") {
    ocr_model = value.empty() ? std::nullopt : std::optional(value);
  } else if (key == "confusion_table") {
    confusion_table = value.empty() ? std::nullopt : std::optional(value);
  } else if (key == "detector") {
    if (value == "auto") detector = DetectorMode::Auto;
    else if (value == "scene") detector = DetectorMode::Scene;
    else if (value == "reference") detector = DetectorMode::Reference;
    else bad(key, value, "expected auto, scene or reference");
  } else if (key == "score_threshold") {
    pipeline.score_threshold = unit_interval(key, value, false, false);
  } else if (key == "prob_threshold") {
    pipeline.localization.prob_threshold = unit_interval(key, value, true, false);
  } else if (key == "nms_iou") {
    pipeline.localization.nms_iou = unit_interval(key, value, false, true);
  } else if (key == "adapt_threshold") {
    pipeline.ocr.adapt_threshold = unit_interval(key, value, false, false);
  } else if (key == "fuzz") {
    const double f = parse_double(key, value);
    if (f < 0) bad(key, value, "must be >= 0");
    fuzz = f;
  } else if (key == "async_ingest") {
    async_ingest = parse_bool(key, value);
  } else if (key == "host") {
    if (value.empty()) bad(key, value, "must not be empty");
    host = value;
  } else if (key == "port") {
    const int p = parse_int(key, value);
    if (p < 0 || p > 65535) bad(key, value, "out of range");
    port = p;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown config key " + std::string(key));
  }
}

ServiceConfig parse_config(std::string_view text, ServiceConfig config) {
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& [key, value] : j.items()) {
      config.set(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return config;
  }
  std::istringstream lines{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(number) + " has no '='");
    }
    config.set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
  return config;
}

ServiceConfig load_config_file(const std::string& path, ServiceConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), std::move(base));
}

ServiceConfig apply_env_overrides(ServiceConfig config, const std::function<const char*(const char*)>& getenv) {
  for (const auto& [key, help] : config_key_help()) {
    std::string var = "PF_" + key;
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char c) { return std::toupper(c); });
    const char* value = getenv ? getenv(var.c_str()) : std::getenv(var.c_str());
    if (value) config.set(key, value);
  }
  return config;
}

}  // namespace platefind
