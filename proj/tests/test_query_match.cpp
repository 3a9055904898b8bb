#include <doctest.h>

#include <functional>
#include <random>

#include "oracles.hpp"
#include "platefind/query_match.hpp"
#include "support.hpp"

using namespace platefind;
using testing_support::make_record;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::InvalidArgument;
}

ConfusionTable mn_table() { return ConfusionTable::from_entries({{'M', 'N', 0.25}}); }

SearchQuery query(VehicleCategory c, const std::string& plate, double fuzz) { return {c, PlateString(plate), fuzz}; }

}  // namespace

TEST_CASE("plate distance examples") {
  const ConfusionTable t = mn_table();
  CHECK(plate_distance("MH12AB1234", "MH12AB1234", t) == 0.0);
  CHECK(plate_distance("MH12N", "MH12M", t) == doctest::Approx(0.25));
  CHECK(plate_distance("MH12MM00", "MH12NN00", t) == doctest::Approx(0.5));
  CHECK(plate_distance("AB", "ABC", t) == 1.0);
  CHECK(plate_distance("", "ABC", t) == 3.0);
  CHECK(plate_distance("MH12X", "MH12M", t) == 1.0);
  CHECK(plate_distance(PlateString("MN"), PlateString("NM"), t) == doctest::Approx(0.5));
}

TEST_CASE("plate distance equals the recursive oracle") {
  std::mt19937_64 rng(101);
  const std::string alphabet = "MN0O18BS5AX";
  for (int t = 0; t < 3; ++t) {
    const ConfusionTable table = oracle::random_valid_table(rng, alphabet, 6);
    const auto sub = [&](char a, char b) { return table.cost(a, b); };
    for (int i = 0; i < 150; ++i) {
      const std::string a = oracle::random_string(rng, 6, alphabet);
      const std::string b = oracle::random_string(rng, 6, alphabet);
      CHECK(plate_distance(a, b, table) == doctest::Approx(oracle::recursive_edit_distance(a, b, sub)).epsilon(1e-12));
    }
  }
}

TEST_CASE("plate distance is a metric") {
  std::mt19937_64 rng(55);
  const std::string alphabet = "MN0O1I";
  const ConfusionTable& table = ConfusionTable::default_table();
  for (int i = 0; i < 1000; ++i) {
    const std::string a = oracle::random_string(rng, 6, alphabet);
    const std::string b = oracle::random_string(rng, 6, alphabet);
    const std::string c = oracle::random_string(rng, 6, alphabet);
    const double ab = plate_distance(a, b, table);
    CHECK(ab >= 0.0);
    CHECK((ab == 0.0) == (a == b));
    CHECK(ab == plate_distance(b, a, table));
    CHECK(plate_distance(a, c, table) <= ab + plate_distance(b, c, table) + 1e-12);
  }
}

TEST_CASE("confusion table validation") {
  CHECK(code_of([] { ConfusionTable::from_entries({{'M', 'm', 0.25}}); }) == ErrorCode::InvalidConfusionTable);
  CHECK(code_of([] { ConfusionTable::from_entries({{'M', 'M', 0.25}}); }) == ErrorCode::InvalidConfusionTable);
  CHECK(code_of([] { ConfusionTable::from_entries({{'M', 'N', 0.0}}); }) == ErrorCode::InvalidConfusionTable);
  CHECK(code_of([] { ConfusionTable::from_entries({{'M', 'N', 1.5}}); }) == ErrorCode::InvalidConfusionTable);
  CHECK(code_of([] { ConfusionTable::from_entries({{'M', 'N', 0.2}, {'N', 'M', 0.3}}); }) ==
        ErrorCode::InvalidConfusionTable);
  // A-B and B-C cheap but A-C at 1 breaks the triangle inequality.
  CHECK(code_of([] { ConfusionTable::from_entries({{'A', 'B', 0.2}, {'B', 'C', 0.2}}); }) ==
        ErrorCode::InvalidConfusionTable);
  CHECK_NOTHROW(ConfusionTable::from_entries({{'A', 'B', 0.2}, {'B', 'C', 0.2}, {'A', 'C', 0.4}}));
  CHECK(code_of([] { ConfusionTable::from_json("{\"a\": 1}"); }) == ErrorCode::InvalidConfusionTable);
}

TEST_CASE("confusion table JSON and defaults") {
  const ConfusionTable& d = ConfusionTable::default_table();
  CHECK(d.cost('M', 'N') == 0.25);
  CHECK(d.cost('N', 'M') == 0.25);
  CHECK(d.cost('0', 'O') == 0.25);
  CHECK(d.cost('1', 'I') == 0.25);
  CHECK(d.cost('8', 'B') == 0.25);
  CHECK(d.cost('5', 'S') == 0.25);
  CHECK(d.cost('A', 'B') == 1.0);
  CHECK(d.cost('A', 'A') == 0.0);
  CHECK(d.entries().size() == 5);
  const ConfusionTable back = ConfusionTable::from_json(d.to_json());
  CHECK(back.entries() == d.entries());
  const ConfusionTable j = ConfusionTable::from_json(R"([{"a": "M", "b": "N", "cost": 0.3}])");
  CHECK(j.cost('N', 'M') == 0.3);
}

TEST_CASE("match_query examples") {
  const ConfusionTable t = mn_table();
  const VehicleRecord four = make_record("a.jpg", VehicleCategory::FourWheeler, "KA01MJ2022");
  const MatchResult hit = match_query(query(VehicleCategory::FourWheeler, "KA01MJ2022", 0), four, t);
  CHECK(hit.verdict == Verdict::Found);
  CHECK(hit.plate_distance == 0.0);
  CHECK(hit.category_match);

  const VehicleRecord two = make_record("a.jpg", VehicleCategory::TwoWheeler, "KA01MJ2022");
  const MatchResult gated = match_query(query(VehicleCategory::FourWheeler, "KA01MJ2022", 10), two, t);
  CHECK(gated.verdict == Verdict::NotFound);
  CHECK_FALSE(gated.category_match);

  const VehicleRecord mn = make_record("b.jpg", VehicleCategory::FourWheeler, "MH12NN00");
  const MatchResult at05 = match_query(query(VehicleCategory::FourWheeler, "MH12MM00", 0.5), mn, t);
  CHECK(at05.plate_distance == doctest::Approx(0.5));
  CHECK(at05.verdict == Verdict::Found);
  CHECK(match_query(query(VehicleCategory::FourWheeler, "MH12MM00", 0.4), mn, t).verdict == Verdict::NotFound);

  const VehicleRecord plateless = make_record("c.jpg", VehicleCategory::FourWheeler, "");
  const MatchResult none = match_query(query(VehicleCategory::FourWheeler, "KA01MJ2022", 100), plateless, t);
  CHECK(std::isinf(none.plate_distance));
  CHECK(none.verdict == Verdict::NotFound);
  CHECK(verdict_name(Verdict::Found) == "found");
  CHECK(verdict_name(Verdict::NotFound) == "not_found");
}

TEST_CASE("search ordering and limits") {
  const ConfusionTable t = mn_table();
  const std::vector<VehicleRecord> empty;
  const SearchResult nothing = search(query(VehicleCategory::FourWheeler, "MH12MM", 1), empty, t, 20);
  CHECK(nothing.verdict == Verdict::NotFound);
  CHECK(nothing.matches.empty());

  // Distances 0.25, 0 and 0.5 in ingestion order.
  const std::vector<VehicleRecord> store = {
      make_record("1.jpg", VehicleCategory::FourWheeler, "MH12MN"),
      make_record("2.jpg", VehicleCategory::FourWheeler, "MH12MM"),
      make_record("3.jpg", VehicleCategory::FourWheeler, "MH12NN"),
      make_record("4.jpg", VehicleCategory::TwoWheeler, "MH12MM"),
      make_record("5.jpg", VehicleCategory::FourWheeler, "ZZ99ZZ"),
  };
  const SearchResult r = search(query(VehicleCategory::FourWheeler, "MH12MM", 0.5), store, t, 20);
  CHECK(r.verdict == Verdict::Found);
  REQUIRE(r.matches.size() == 3);
  CHECK(r.matches[0].plate_distance == 0.0);
  CHECK(r.matches[0].record.image_id == "2.jpg");
  CHECK(r.matches[1].plate_distance == 0.25);
  CHECK(r.matches[2].plate_distance == 0.5);
  CHECK(r.matches[2].ingestion_index == 2);

  const SearchResult top = search(query(VehicleCategory::FourWheeler, "MH12MM", 0.5), store, t, 1);
  REQUIRE(top.matches.size() == 1);
  CHECK(top.matches[0].record.image_id == "2.jpg");

  const SearchResult one = search(query(VehicleCategory::FourWheeler, "ZZ99ZZ", 0), store, t, 5);
  REQUIRE(one.matches.size() == 1);
  CHECK(one.matches[0].record.image_id == "5.jpg");

  CHECK(code_of([&] { search(query(VehicleCategory::FourWheeler, "MH12MM", 0.5), store, t, 0); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { search(query(VehicleCategory::FourWheeler, "MH12MM", -1), store, t, 5); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("equal distances order by detection score, then ingestion") {
  const ConfusionTable t = mn_table();
  const std::vector<VehicleRecord> store = {
      make_record("1.jpg", VehicleCategory::FourWheeler, "AB12", 0.6),
      make_record("2.jpg", VehicleCategory::FourWheeler, "AB12", 0.9),
      make_record("3.jpg", VehicleCategory::FourWheeler, "AB12", 0.6),
  };
  const SearchResult r = search(query(VehicleCategory::FourWheeler, "AB12", 0), store, t, 10);
  REQUIRE(r.matches.size() == 3);
  CHECK(r.matches[0].record.image_id == "2.jpg");
  CHECK(r.matches[1].record.image_id == "1.jpg");
  CHECK(r.matches[2].record.image_id == "3.jpg");
}

TEST_CASE("search verdict is the disjunction of record verdicts and is monotone in fuzz") {
  std::mt19937_64 rng(808);
  const std::string alphabet = "MN01AB";
  std::uniform_int_distribution<int> cat(0, 3), size(0, 100);
  const ConfusionTable& table = ConfusionTable::default_table();
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<VehicleRecord> store;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      std::string plate = oracle::random_string(rng, 5, alphabet);
      store.push_back(make_record("img" + std::to_string(i), kAllCategories[cat(rng)], plate, 0.9, i));
    }
    std::string qp;
    while (qp.empty()) qp = oracle::random_string(rng, 5, alphabet);
    const VehicleCategory qc = kAllCategories[cat(rng)];
    bool previous = false;
    for (double fuzz = 0; fuzz <= 3.0; fuzz += 0.25) {
      const SearchQuery q{qc, PlateString(qp), fuzz};
      bool any = false;
      for (const VehicleRecord& r : store) any = any || match_query(q, r, table).verdict == Verdict::Found;
      const SearchResult res = search(q, store, table, 500);
      CHECK((res.verdict == Verdict::Found) == any);
      if (previous) CHECK(res.verdict == Verdict::Found);
      previous = res.verdict == Verdict::Found;
      for (const MatchResult& m : res.matches) CHECK(m.record.category == qc);
    }
  }
}
