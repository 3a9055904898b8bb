#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <sstream>
#include <string>

#include "platefind/query_match.hpp"
#include "platefind/store_index.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace platefind;
using nlohmann::json;
using testing_support::make_record;
using testing_support::TempDir;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(PLATEFIND_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::filesystem::path seeded_store(const TempDir& dir) {
  const auto root = dir / "store";
  RecordStore::open(root)->append_records({make_record("a.jpg", VehicleCategory::FourWheeler, "KA01MJ2022"),
                        make_record("b.jpg", VehicleCategory::FourWheeler, "MH12NN00"),
                        make_record("c.jpg", VehicleCategory::TwoWheeler, "TN09AB1234")});
  return root;
}

}  // namespace

TEST_CASE("search exit codes and output") {
  TempDir dir;
  const std::string store = "--store " + q(seeded_store(dir));

  const RunResult hit = run("search " + store + " --type 4-wheeler --plate KA01MJ2022");
  CHECK(hit.exit_code == 0);
  CHECK(hit.out.rfind("FOUND 4-wheeler KA01MJ2022 fuzz=0.0 (1 match)", 0) == 0);
  CHECK(hit.out.find("a.jpg") != std::string::npos);

  const RunResult miss = run("search " + store + " --type 2-wheeler --plate KA01MJ2022 --fuzz 5");
  CHECK(miss.exit_code == 3);
  CHECK(miss.out.rfind("NOT_FOUND", 0) == 0);

  CHECK(run("search " + store + " --type 4-wheeler --plate MH12MM00 --fuzz 0.4").exit_code == 3);
  const RunResult mn = run("search " + store + " --type 4-wheeler --plate MH12MM00 --fuzz 0.5");
  CHECK(mn.exit_code == 0);
  CHECK(mn.out.find("distance=0.5") != std::string::npos);

  CHECK(run("search " + store + " --type 4-wheeler --plate KA01MJ2022 --image a.jpg").exit_code == 0);
  CHECK(run("search " + store + " --type 4-wheeler --plate KA01MJ2022 --image b.jpg").exit_code == 3);

  const RunResult as_json = run("search " + store + " --type '4 wheeler' --plate 'mh 12 nn 00' --json");
  CHECK(as_json.exit_code == 0);
  const json j = json::parse(as_json.out);
  CHECK(j["verdict"] == "found");
  CHECK(j["matches"][0]["image_id"] == "b.jpg");
}

TEST_CASE("usage and failure exit codes") {
  TempDir dir;
  const std::string store = "--store " + q(seeded_store(dir));
  CHECK(run("search " + store + " --type boat --plate AB12").exit_code == 2);
  CHECK(run("search " + store + " --type 4-wheeler --plate ---").exit_code == 2);
  CHECK(run("search " + store + " --type 4-wheeler --plate AB --fuzz -1").exit_code == 2);
  CHECK(run("search " + store + " --type 4-wheeler").exit_code == 2);
  CHECK(run("").exit_code == 2);
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("search --store " + q(dir / "missing") + " --type 4-wheeler --plate AB").exit_code == 1);
  CHECK(run("--help").exit_code == 0);
}

TEST_CASE("config file and environment feed the store location") {
  TempDir dir;
  const auto store = seeded_store(dir);
  testing_support::write_file(dir / "pf.conf", "store = " + store.string() + "\nfuzz = 0.5\n");
  CHECK(run("search --config " + q(dir / "pf.conf") + " --type 4-wheeler --plate MH12MM00").exit_code == 0);
  const std::string env = "PF_STORE=" + q(store) + " ";
  const std::string cmd = env + PLATEFIND_CLI + " search --type 4-wheeler --plate KA01MJ2022 >/dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
}

TEST_CASE("eval prints the F1 table") {
  TempDir dir;
  testing_support::write_f1_fixture(dir / "via.json", dir / "pred.jsonl");
  const RunResult table = run("eval --annotations " + q(dir / "via.json") + " --predictions " + q(dir / "pred.jsonl"));
  CHECK(table.exit_code == 0);
  std::istringstream lines(table.out);
  std::string line, overall;
  while (std::getline(lines, line)) {
    if (line.rfind("overall", 0) == 0) overall = line;
  }
  CHECK(overall.find("0.6667") != std::string::npos);
  CHECK(overall.find("0.6250") != std::string::npos);  // precision 5/8
  CHECK(overall.find("0.7143") != std::string::npos);  // recall 5/7

  const RunResult js =
      run("eval --annotations " + q(dir / "via.json") + " --predictions " + q(dir / "pred.jsonl") + " --json");
  const json j = json::parse(js.out);
  CHECK(j["overall"]["tp"] == 5);
  CHECK(j["overall"]["f1"].get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(run("eval --annotations " + q(dir / "none.json") + " --predictions " + q(dir / "pred.jsonl")).exit_code == 1);
}

TEST_CASE("synth, ingest and search round trip") {
  TempDir dir;
  const RunResult synth = run("synth --out " + q(dir / "scenes") + " --count 3 --seed 21");
  REQUIRE(synth.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "scenes" / "scene_0002.png"));
  CHECK(std::filesystem::exists(dir / "scenes" / "via.json"));

  testing_support::quick_classifier()->save((dir / "ocr.bin").string());
  const std::string common = "--store " + q(dir / "store") + " --model " + q(dir / "ocr.bin") + " --detector scene";
  const RunResult ingest = run("ingest " + q(dir / "scenes") + " " + common + " --jobs 2");
  REQUIRE(ingest.exit_code == 0);
  std::istringstream lines(ingest.out);
  std::string line;
  int images = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    CHECK_FALSE(j.contains("error"));
    ++images;
  }
  CHECK(images == 3);

  const auto records = RecordStore::open(dir / "store", false)->snapshot();
  REQUIRE_FALSE(records->empty());
  const VehicleRecord* read = nullptr;
  for (const VehicleRecord& r : *records) {
    if (r.plate_reading && !r.plate_reading->text.str().empty()) read = &r;
  }
  REQUIRE(read != nullptr);
  const RunResult found = run("search --store " + q(dir / "store") + " --type '" +
                              std::string(canonical_label(read->category)) + "' --plate " + read->plate_reading->text.str());
  CHECK(found.exit_code == 0);

  // Re-ingest is idempotent: every image reports the duplicate, nothing is appended.
  const RunResult again = run("ingest " + q(dir / "scenes") + " " + common);
  CHECK(again.exit_code == 0);
  CHECK(RecordStore::open(dir / "store", false)->size() == records->size());
}

TEST_CASE("train-ocr writes a loadable model") {
  TempDir dir;
  const RunResult r = run("train-ocr --out " + q(dir / "m.bin") + " --count 20 --epochs 2 --hidden 16 --holdout 5");
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j["samples"].get<int>() > 0);
  CHECK(j.contains("holdout_accuracy"));
  CHECK_NOTHROW(MlpCharClassifier::load((dir / "m.bin").string()));
}

TEST_CASE("serve answers HTTP until terminated") {
  TempDir dir;
  const auto store = seeded_store(dir);
  testing_support::quick_classifier()->save((dir / "ocr.bin").string());
  int fds[2];
  REQUIRE(pipe(fds) == 0);
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    const std::string s = store.string(), m = (dir / "ocr.bin").string();
    execl(PLATEFIND_CLI, PLATEFIND_CLI, "serve", "--port", "0", "--host", "127.0.0.1", "--store", s.c_str(), "--model",
          m.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  char c = 0;
  while (read(fds[0], &c, 1) == 1 && c != '\n') line += c;
  close(fds[0]);
  const std::string prefix = "listening on http://127.0.0.1:";
  REQUIRE(line.rfind(prefix, 0) == 0);
  const int port = std::stoi(line.substr(prefix.size()));

  httplib::Client client("127.0.0.1", port);
  auto r = client.Post("/api/v1/search", R"({"type":"4-wheeler","plate":"MH12MM00","fuzz":0.5})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["verdict"] == "found");
  auto page = client.Get("/api/v1/records");
  REQUIRE(page);
  CHECK(json::parse(page->body)["total"] == 3);

  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
}
