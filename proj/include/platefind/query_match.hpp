#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <tuple>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "platefind/model.hpp"
#include "platefind/record.hpp"

namespace platefind {

// Symmetric substitution costs between plate characters. Unlisted pairs cost
// 1, identical characters 0, insertions and deletions 1.
class ConfusionTable {
 public:
  ConfusionTable() = default;

  /// Throws InvalidConfusionTable if a character is outside the alphabet, a
  /// pair is listed twice or pairs a character with itself, a cost is
  /// outside (0,1], or the resulting cost function breaks the triangle
  /// inequality for any character triple.
  static ConfusionTable from_entries(const std::vector<std::tuple<char, char, double>>& entries);
  /// JSON list of {"a": char, "b": char, "cost": real}.
  static ConfusionTable from_json(std::string_view text);
  static ConfusionTable load(const std::string& path);

  /// M/N, 0/O, 1/I, 8/B and 5/S at 0.25.
  static const ConfusionTable& default_table();

  double cost(char a, char b) const noexcept;
  const std::map<std::pair<char, char>, double>& entries() const noexcept { return costs_; }
  std::string to_json() const;

 private:
  std::map<std::pair<char, char>, double> costs_;  // key has first < second
};

/// Weighted Levenshtein distance by dynamic programming.
double plate_distance(const PlateString& a, const PlateString& b, const ConfusionTable& table);
double plate_distance(std::string_view a, std::string_view b, const ConfusionTable& table);

struct SearchQuery {
  VehicleCategory category = VehicleCategory::FourWheeler;
  PlateString plate{"0"};
  double fuzz_budget = 0.0;  // >= 0; 0 means exact
};

enum class Verdict { Found, NotFound };
std::string_view verdict_name(Verdict v);  // "found" / "not_found"

struct MatchResult {
  VehicleRecord record;  // evidence: crops and plate reading
  std::size_t ingestion_index = 0;
  double plate_distance = std::numeric_limits<double>::infinity();
  bool category_match = false;
  Verdict verdict = Verdict::NotFound;
};

/// Records without a plate reading have infinite distance.
MatchResult match_query(const SearchQuery& query, const VehicleRecord& record, const ConfusionTable& table,
                        std::size_t ingestion_index = 0);

struct SearchResult {
  Verdict verdict = Verdict::NotFound;
  std::vector<MatchResult> matches;  // FOUND only, at most `limit`
};

/// FOUND matches ordered by distance, then descending detection score, then
/// ingestion order. The overall verdict is FOUND iff any record matched.
SearchResult search(const SearchQuery& query, std::span<const VehicleRecord> records, const ConfusionTable& table,
                    std::size_t limit);

}  // namespace platefind
