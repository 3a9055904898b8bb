#include "platefind/query_match.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace platefind {

using nlohmann::json;

namespace {

std::pair<char, char> key_of(char a, char b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfusionTable, what); }

}  // namespace

ConfusionTable ConfusionTable::from_entries(const std::vector<std::tuple<char, char, double>>& entries) {
  ConfusionTable table;
  for (const auto& [a, b, cost] : entries) {
    if (!is_plate_char(a) || !is_plate_char(b)) invalid("confusion entries must use characters 0-9, A-Z");
    if (a == b) invalid(std::string("self pair ") + a + a + " is not allowed");
    if (!(cost > 0.0 && cost <= 1.0)) invalid(std::string("cost for ") + a + b + " must lie in (0,1]");
    if (!table.costs_.emplace(key_of(a, b), cost).second) invalid(std::string("pair ") + a + b + " listed twice");
  }
  // Unlisted pairs cost 1, so triples mixing listed and unlisted pairs must
  // also be checked for the distance to stay a metric.
  std::vector<char> involved;
  for (const auto& [k, cost] : table.costs_) {
    involved.push_back(k.first);
    involved.push_back(k.second);
  }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());
  for (char a : involved) {
    for (char b : involved) {
      for (char c : kPlateAlphabet) {
        if (table.cost(a, b) > table.cost(a, c) + table.cost(c, b) + 1e-12) {
          invalid(std::string("triangle inequality fails for ") + a + "," + c + "," + b);
        }
      }
    }
  }
  return table;
}

ConfusionTable ConfusionTable::from_json(std::string_view text) {
  std::vector<std::tuple<char, char, double>> entries;
  try {
    const json doc = json::parse(text);
    if (!doc.is_array()) invalid("confusion table must be a JSON list");
    for (const json& e : doc) {
      const std::string a = e.at("a").get<std::string>();
      const std::string b = e.at("b").get<std::string>();
      if (a.size() != 1 || b.size() != 1) invalid("confusion entries need single characters");
      entries.emplace_back(a[0], b[0], e.at("cost").get<double>());
    }
  } catch (const json::exception& e) {
    invalid(std::string("malformed confusion table: ") + e.what());
  }
  return from_entries(entries);
}

ConfusionTable ConfusionTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open confusion table " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

const ConfusionTable& ConfusionTable::default_table() {
  static const ConfusionTable table =
      from_entries({{'M', 'N', 0.25}, {'0', 'O', 0.25}, {'1', 'I', 0.25}, {'8', 'B', 0.25}, {'5', 'S', 0.25}});
  return table;
}

double ConfusionTable::cost(char a, char b) const noexcept {
  if (a == b) return 0.0;
  const auto it = costs_.find(key_of(a, b));
  return it == costs_.end() ? 1.0 : it->second;
}

std::string ConfusionTable::to_json() const {
  json out = json::array();
  for (const auto& [k, cost] : costs_) {
    out.push_back({{"a", std::string(1, k.first)}, {"b", std::string(1, k.second)}, {"cost", cost}});
  }
  return out.dump();
}

double plate_distance(std::string_view a, std::string_view b, const ConfusionTable& table) {
  std::vector<double> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<double>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<double>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1.0, cur[j - 1] + 1.0, prev[j - 1] + table.cost(a[i - 1], b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double plate_distance(const PlateString& a, const PlateString& b, const ConfusionTable& table) {
  return plate_distance(std::string_view(a.str()), std::string_view(b.str()), table);
}

std::string_view verdict_name(Verdict v) { return v == Verdict::Found ? "found" : "not_found"; }

MatchResult match_query(const SearchQuery& query, const VehicleRecord& record, const ConfusionTable& table,
                        std::size_t ingestion_index) {
  MatchResult m;
  m.record = record;
  m.ingestion_index = ingestion_index;
  m.category_match = query.category == record.category;
  if (record.plate_reading) m.plate_distance = plate_distance(query.plate, record.plate_reading->text, table);
  m.verdict = (m.category_match && m.plate_distance <= query.fuzz_budget) ? Verdict::Found : Verdict::NotFound;
  return m;
}

SearchResult search(const SearchQuery& query, std::span<const VehicleRecord> records, const ConfusionTable& table,
                    std::size_t limit) {
  if (limit < 1) throw Error(ErrorCode::InvalidArgument, "limit must be at least 1");
  if (!(query.fuzz_budget >= 0.0)) throw Error(ErrorCode::InvalidArgument, "fuzz budget must be non-negative");
  SearchResult result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    // Category gate first: skips the distance computation for other types.
    if (records[i].category != query.category) continue;
    MatchResult m = match_query(query, records[i], table, i);
    if (m.verdict == Verdict::Found) result.matches.push_back(std::move(m));
  }
  std::sort(result.matches.begin(), result.matches.end(), [](const MatchResult& a, const MatchResult& b) {
    if (a.plate_distance != b.plate_distance) return a.plate_distance < b.plate_distance;
    if (a.record.detection_score != b.record.detection_score) return a.record.detection_score > b.record.detection_score;
    return a.ingestion_index < b.ingestion_index;
  });
  result.verdict = result.matches.empty() ? Verdict::NotFound : Verdict::Found;
  if (result.matches.size() > limit) result.matches.resize(limit);
  return result;
}

}  // namespace platefind
