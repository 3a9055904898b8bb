// Command-line front end: ingest, search, eval, train-ocr, serve, synth.
#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <opencv2/imgcodecs.hpp>

#include "platefind/config.hpp"
#include "platefind/plate_ocr.hpp"
#include "platefind/service.hpp"
#include "platefind/synthetic.hpp"
#include "platefind/vehicle_detection.hpp"

// After the project headers: <resolv.h>, pulled in here, defines a macro
// that collides with Eigen identifiers.
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace platefind;

namespace {

constexpr int kExitFound = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotFound = 3;

struct CommonOptions {
  std::string config_file;
  std::string store;
  std::string model;
  std::string detector;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool model) {
  cmd->add_option("--config", o.config_file, "Configuration file (key = value lines or JSON)");
  cmd->add_option("--store", o.store, "Store root directory");
  if (model) {
    cmd->add_option("--model", o.model, "Trained OCR model file");
    cmd->add_option("--detector", o.detector, "Backend selection: auto, scene or reference");
  }
}

// File, then PF_* environment, then flags.
ServiceConfig resolve_config(const CommonOptions& o) {
  ServiceConfig config;
  if (!o.config_file.empty()) config = load_config_file(o.config_file, config);
  config = apply_env_overrides(std::move(config));
  if (!o.store.empty()) config.set("store", o.store);
  if (!o.model.empty()) config.set("ocr_model", o.model);
  if (!o.detector.empty()) config.set("detector", o.detector);
  return config;
}

std::shared_ptr<const CharClassifier> load_classifier(const ServiceConfig& config) {
  if (!config.ocr_model) return nullptr;
  return std::make_shared<MlpCharClassifier>(MlpCharClassifier::load(*config.ocr_model));
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

int run_ingest(const CommonOptions& common, const std::string& dir, int jobs) {
  const ServiceConfig config = resolve_config(common);
  auto classifier = load_classifier(config);
  if (!classifier) {
    std::cerr << "error: ingest needs an OCR model (--model or ocr_model)\n";
    return kExitUsage;
  }
  if (!fs::is_directory(dir)) {
    std::cerr << "error: " << dir << " is not a directory\n";
    return kExitUsage;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  Service service(config, classifier);
  if (!service.store()) {
    std::cerr << "error: store unavailable: " << config.store << "\n";
    return kExitFailure;
  }
  std::vector<json> lines(files.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> undecodable{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      json line = {{"path", files[i].string()}};
      try {
        line.update(ingest_outcome_json(service.ingest_file(files[i])));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::UndecodableImage) undecodable = true;
        line["error"] = {{"code", std::string(error_code_name(e.code()))}, {"message", e.detail()}};
      } catch (const std::exception& e) {
        line["error"] = {{"code", "BackendFailure"}, {"message", e.what()}};
      }
      lines[i] = std::move(line);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::max(1, jobs); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const json& line : lines) std::cout << line.dump() << "\n";
  return undecodable ? kExitFailure : 0;
}

int run_search(const CommonOptions& common, const std::string& type, const std::string& plate,
               std::optional<double> fuzz, std::optional<int> limit, const std::string& image, bool as_json) {
  const ServiceConfig config = resolve_config(common);
  // The request goes through the same handler as POST /api/v1/search.
  json body = {{"type", type}, {"plate", plate}};
  if (fuzz) body["fuzz"] = *fuzz;
  if (limit) body["limit"] = *limit;
  if (!image.empty()) body["image_id"] = image;
  const Service service(config, nullptr, std::nullopt, /*create_store=*/false);
  const ApiResponse response = service.handle_search(body.dump());
  const json out = response.json();
  if (response.status != 200) {
    std::cerr << "error: " << out["error"]["code"].get<std::string>() << ": "
              << out["error"]["message"].get<std::string>() << "\n";
    return response.status == 400 ? kExitUsage : kExitFailure;
  }
  const bool found = out["verdict"] == "found";
  if (as_json) {
    std::cout << response.body << "\n";
  } else {
    std::cout << (found ? "FOUND" : "NOT_FOUND") << " " << out["query_echo"]["type"].get<std::string>() << " "
              << out["query_echo"]["plate"].get<std::string>() << " fuzz=" << out["query_echo"]["fuzz"].dump() << " ("
              << out["matches"].size() << " match" << (out["matches"].size() == 1 ? "" : "es") << ")\n";
    for (const json& m : out["matches"]) {
      std::cout << "  " << m["record_id"].get<std::string>() << "  distance=" << m["distance"].dump() << "  "
                << m["category"].get<std::string>() << "  " << m["plate_text"].get<std::string>() << "  "
                << m["image_id"].get<std::string>() << "\n";
    }
  }
  return found ? kExitFound : kExitNotFound;
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

int run_eval(const std::string& annotations, const std::string& predictions, double iou, bool as_json) {
  const AnnotationSet truth = load_via_annotations_file(annotations);
  const EvalMetrics metrics = evaluate_f1(load_predictions_jsonl(predictions), truth, iou);
  auto row = [](const CountMetrics& m) {
    return json{{"tp", m.true_positives}, {"fp", m.false_positives}, {"fn", m.false_negatives},
                {"precision", m.precision}, {"recall", m.recall},        {"f1", m.f1}};
  };
  if (as_json) {
    json out = {{"iou", iou}, {"overall", row(metrics.overall)}, {"per_category", json::object()}};
    for (const auto& [c, m] : metrics.per_category) out["per_category"][std::string(canonical_label(c))] = row(m);
    std::cout << out.dump() << "\n";
    return 0;
  }
  std::cout << std::left << std::setw(12) << "category" << std::right << std::setw(6) << "tp" << std::setw(6) << "fp"
            << std::setw(6) << "fn" << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9)
            << "f1" << "\n";
  auto print = [](const std::string& name, const CountMetrics& m) {
    std::cout << std::left << std::setw(12) << name << std::right << std::setw(6) << m.true_positives << std::setw(6)
              << m.false_positives << std::setw(6) << m.false_negatives << std::setw(11) << fixed4(m.precision)
              << std::setw(9) << fixed4(m.recall) << std::setw(9) << fixed4(m.f1) << "\n";
  };
  for (const auto& [c, m] : metrics.per_category) print(std::string(canonical_label(c)), m);
  print("overall", metrics.overall);
  return 0;
}

int run_train(const std::string& out, int count, std::uint64_t seed, int hidden, int epochs, int holdout) {
  const PlateRenderSpec spec = training_plate_spec();
  std::cerr << "building " << count << " glyphs per class (seed " << seed << ")\n";
  const std::vector<GlyphSample> samples = build_glyph_dataset(count, seed, spec);
  TrainingConfig tc;
  tc.hidden = hidden;
  tc.epochs = epochs;
  tc.seed = seed;
  const MlpCharClassifier model = train_char_classifier(samples, tc);
  model.save(out);
  json summary = {{"model", out}, {"samples", samples.size()}, {"train_accuracy", classifier_accuracy(model, samples)}};
  if (holdout > 0) {
    // A different seed stream keeps the held-out plates disjoint from training.
    const auto held = build_glyph_dataset(holdout, seed ^ 0x9E3779B97F4A7C15ULL, spec);
    summary["holdout_samples"] = held.size();
    summary["holdout_accuracy"] = classifier_accuracy(model, held);
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int run_serve(const CommonOptions& common, std::optional<int> port, const std::string& host, bool async) {
  ServiceConfig config = resolve_config(common);
  if (port) config.set("port", std::to_string(*port));
  if (!host.empty()) config.set("host", host);
  if (async) config.async_ingest = true;
  Service service(config, load_classifier(config));
  httplib::Server server;
  mount_routes(server, service);
  const int bound = config.port == 0 ? server.bind_to_any_port(config.host) :
                                       (server.bind_to_port(config.host, config.port) ? config.port : -1);
  if (bound < 0) {
    std::cerr << "error: cannot bind " << config.host << ":" << config.port << "\n";
    return kExitFailure;
  }
  std::cout << "listening on http://" << config.host << ":" << bound << std::endl;
  return server.listen_after_bind() ? 0 : kExitFailure;
}

int run_synth(const std::string& out, int count, std::uint64_t seed, double plate_probability) {
  fs::create_directories(out);
  SceneRenderSpec spec;
  spec.plate_probability = plate_probability;
  AnnotationSet via;
  std::ofstream truth(fs::path(out) / "truth.jsonl");
  for (int i = 0; i < count; ++i) {
    const SyntheticScene scene = generate_scene(seed + static_cast<std::uint64_t>(i), spec);
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i;
    const std::string image_id = name.str() + ".png";
    cv::imwrite((fs::path(out) / image_id).string(), scene.image);
    std::ofstream(fs::path(out) / (name.str() + ".scene.json")) << scene_to_json(scene.spec).dump() << "\n";
    const AnnotationSet one = annotations_from_scene(image_id, scene.spec);
    via.image_ids.insert(via.image_ids.end(), one.image_ids.begin(), one.image_ids.end());
    via.regions.insert(via.regions.end(), one.regions.begin(), one.regions.end());
    json objects = json::array();
    for (const PlantedObject& o : scene.spec.objects) {
      objects.push_back({{"category", std::string(canonical_label(o.category))},
                         {"plate", o.plate ? json(o.plate->text) : json(nullptr)}});
    }
    truth << json{{"image_id", image_id}, {"objects", objects}}.dump() << "\n";
  }
  std::ofstream(fs::path(out) / "via.json") << annotations_to_via_json(via) << "\n";
  std::cout << "wrote " << count << " scenes to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"platefind: find vehicles by type and licence plate"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* ingest = app.add_subcommand("ingest", "Ingest every JPEG/PNG under a directory");
  std::string ingest_dir;
  int jobs = 1;
  ingest->add_option("dir", ingest_dir, "Directory to scan recursively")->required();
  ingest->add_option("--jobs", jobs, "Parallel image workers")->check(CLI::PositiveNumber);
  add_common(ingest, common, true);

  auto* search_cmd = app.add_subcommand("search", "Search the store by vehicle type and plate");
  std::string type, plate, image;
  std::optional<double> fuzz;
  std::optional<int> limit;
  bool as_json = false;
  search_cmd->add_option("--type", type, "Vehicle type, e.g. 4-wheeler")->required();
  search_cmd->add_option("--plate", plate, "Plate number")->required();
  search_cmd->add_option("--fuzz", fuzz, "Maximum plate distance (default from config, else 0)");
  search_cmd->add_option("--limit", limit, "Maximum matches returned (default 20)");
  search_cmd->add_option("--image", image, "Only check records ingested from this image id");
  search_cmd->add_flag("--json", as_json, "Print the API response JSON");
  add_common(search_cmd, common, false);

  auto* eval = app.add_subcommand("eval", "Score detections against VIA annotations");
  std::string annotations, predictions;
  double iou = kDefaultMatchIou;
  bool eval_json = false;
  eval->add_option("--annotations", annotations, "VIA JSON file")->required();
  eval->add_option("--predictions", predictions, "Predictions JSON lines")->required();
  eval->add_option("--iou", iou, "IoU match threshold")->check(CLI::Range(0.0, 1.0));
  eval->add_flag("--json", eval_json, "Print JSON");

  auto* train = app.add_subcommand("train-ocr", "Train the character classifier on synthetic plates");
  std::string model_out;
  int count = 500, hidden = TrainingConfig{}.hidden, epochs = TrainingConfig{}.epochs, holdout = 0;
  std::uint64_t seed = 7;
  train->add_option("--out", model_out, "Model file to write")->required();
  train->add_option("--count", count, "Glyph samples per class")->check(CLI::PositiveNumber);
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--hidden", hidden, "Hidden units")->check(CLI::PositiveNumber);
  train->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  train->add_option("--holdout", holdout, "Held-out glyphs per class to report accuracy on");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::optional<int> port;
  std::string host;
  bool async = false;
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_flag("--async", async, "Answer ingest with 202 and a job id");
  add_common(serve, common, true);

  auto* synth = app.add_subcommand("synth", "Write synthetic scenes with sidecars and VIA annotations");
  std::string synth_out;
  int synth_count = 10;
  std::uint64_t synth_seed = 1;
  double plate_probability = 1.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "First scene seed");
  synth->add_option("--plate-probability", plate_probability, "Chance a vehicle shows its plate")
      ->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ingest) return run_ingest(common, ingest_dir, jobs);
    if (*search_cmd) return run_search(common, type, plate, fuzz, limit, image, as_json);
    if (*eval) return run_eval(annotations, predictions, iou, eval_json);
    if (*train) return run_train(model_out, count, seed, hidden, epochs, holdout);
    if (*serve) return run_serve(common, port, host, async);
    if (*synth) return run_synth(synth_out, synth_count, synth_seed, plate_probability);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidArgument ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
