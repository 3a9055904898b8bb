#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "platefind/store_index.hpp"

namespace platefind {

// Which backends produce vehicle boxes and plate maps.
//  scene:     mock backends driven by a <image>.scene.json sidecar (required)
//  reference: the bundled trained reference backends
//  auto:      scene when a sidecar exists, reference otherwise
enum class DetectorMode { Auto, Scene, Reference };

struct ServiceConfig {
  std::string store = "platefind-store";
  std::optional<std::string> ocr_model;        // path of a trained OCR model
  std::optional<std::string> confusion_table;  // JSON list; built-in default when absent
  DetectorMode detector = DetectorMode::Auto;
  PipelineConfig pipeline;
  double fuzz = 0.0;  // default search budget
  bool async_ingest = false;
  std::string host = "127.0.0.1";
  int port = 8080;

  /// Applies one key; throws InvalidArgument for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
};

/// All recognised keys, in documentation order.
const std::map<std::string, std::string>& config_key_help();

/// "key = value" lines ('#' comments) or a JSON object of the same keys.
ServiceConfig parse_config(std::string_view text, ServiceConfig base = {});
ServiceConfig load_config_file(const std::string& path, ServiceConfig base = {});

/// Overrides from PF_<KEY> variables (e.g. PF_STORE, PF_SCORE_THRESHOLD).
/// `getenv` is injectable for tests.
ServiceConfig apply_env_overrides(ServiceConfig config,
                                  const std::function<const char*(const char*)>& getenv = nullptr);

std::string_view detector_mode_name(DetectorMode mode);

}  // namespace platefind
