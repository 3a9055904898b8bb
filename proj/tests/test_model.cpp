#include <doctest.h>

#include <cctype>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "platefind/model.hpp"
#include "platefind/record.hpp"
#include "platefind/scene.hpp"
#include "support.hpp"

using namespace platefind;

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

}  // namespace

TEST_CASE("plate normalization strips separators and uppercases") {
  CHECK(normalize_plate_string("mh 12-ab 1234").str() == "MH12AB1234");
  CHECK(normalize_plate_string("KA01MJ2022").str() == "KA01MJ2022");
  CHECK(code_of([] { normalize_plate_string("--- ---"); }) == ErrorCode::EmptyPlate);
  CHECK(code_of([] { normalize_plate_string(""); }) == ErrorCode::EmptyPlate);
}

TEST_CASE("plate normalization is idempotent and stays inside the OCR alphabet") {
  for (int c = 0; c < 256; ++c) {
    const std::string s(1, static_cast<char>(c));
    const bool keeps = std::isalnum(c) && c < 128;
    if (!keeps) {
      CHECK(code_of([&] { normalize_plate_string(s); }) == ErrorCode::EmptyPlate);
      continue;
    }
    const PlateString p = normalize_plate_string(s);
    REQUIRE(p.size() == 1);
    CHECK(is_plate_char(p[0]));
  }
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> byte(1, 255);
  for (int i = 0; i < 2000; ++i) {
    std::string s(12, ' ');
    for (char& c : s) c = static_cast<char>(byte(rng));
    try {
      const PlateString once = normalize_plate_string(s);
      CHECK(normalize_plate_string(once.str()) == once);
      for (char c : once.str()) CHECK(char_class_index(c) >= 0);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyPlate);
    }
  }
}

TEST_CASE("PlateString rejects text outside the alphabet") {
  CHECK(code_of([] { PlateString("ab"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { PlateString(""); }) == ErrorCode::EmptyPlate);
  CHECK(PlateString("AB12").size() == 4);
}

TEST_CASE("vehicle category labels") {
  CHECK(parse_vehicle_category("4-Wheeler") == VehicleCategory::FourWheeler);
  CHECK(parse_vehicle_category(">4 wheeler") == VehicleCategory::GtFourWheeler);
  CHECK(parse_vehicle_category("2wheeler") == VehicleCategory::TwoWheeler);
  CHECK(parse_vehicle_category("3-WHEELER") == VehicleCategory::ThreeWheeler);
  CHECK(code_of([] { parse_vehicle_category("boat"); }) == ErrorCode::UnknownCategory);
  for (VehicleCategory c : kAllCategories) CHECK(parse_vehicle_category(canonical_label(c)) == c);
}

TEST_CASE("alphabet has 36 classes in index order") {
  REQUIRE(kPlateAlphabet.size() == static_cast<std::size_t>(kNumCharClasses));
  for (int i = 0; i < kNumCharClasses; ++i) CHECK(char_class_index(kPlateAlphabet[i]) == i);
  CHECK(char_class_index('a') == -1);
  CHECK(char_class_index('-') == -1);
}

TEST_CASE("bounding box validation and clipping") {
  CHECK(code_of([] { BoundingBox(5, 5, 5, 10); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { BoundingBox(-1, 0, 5, 10); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { BoundingBox(0, 0, NAN, 10); }) == ErrorCode::InvalidArgument);
  const BoundingBox b(10, 10, 50, 40);
  CHECK(b.area() == doctest::Approx(1200));
  const auto c = b.clipped(30, 100);
  REQUIRE(c.has_value());
  CHECK(c->x_max() == 30);
  CHECK_FALSE(b.clipped(5, 5).has_value());
}

TEST_CASE("quadrilateral ordering and degeneracy") {
  const auto q = Quadrilateral::from_unordered({Point{10, 10}, Point{0, 10}, Point{10, 0}, Point{0, 0}});
  CHECK(q[0] == Point{0, 0});
  CHECK(q[1] == Point{10, 0});
  CHECK(q[2] == Point{10, 10});
  CHECK(q[3] == Point{0, 10});
  CHECK(q.area() == doctest::Approx(100));
  CHECK(q.is_convex());
  // Bow tie.
  CHECK(code_of([] { Quadrilateral({Point{0, 0}, Point{10, 10}, Point{10, 0}, Point{0, 10}}); }) ==
        ErrorCode::DegenerateQuad);
  // Counter-clockwise in y-down coordinates.
  CHECK(code_of([] { Quadrilateral({Point{0, 0}, Point{0, 10}, Point{10, 10}, Point{10, 0}}); }) ==
        ErrorCode::DegenerateQuad);
  const Quadrilateral t = q.translated(5, -2);
  CHECK(t[0] == Point{5, -2});
}

TEST_CASE("error codes round-trip through their names") {
  for (ErrorCode c : all_error_codes()) CHECK(parse_error_code(error_code_name(c)) == c);
  CHECK_FALSE(parse_error_code("NoSuchThing").has_value());
}

TEST_CASE("timestamps format and parse") {
  const Timestamp t(std::chrono::milliseconds(1760000000123));
  const std::string s = format_rfc3339(t);
  CHECK(s == "2025-10-09T08:53:20.123Z");
  CHECK(parse_rfc3339(s) == t);
  CHECK(parse_rfc3339("2025-10-09T10:53:20.123+02:00") == t);
  CHECK(parse_rfc3339("2025-10-09T08:53:20Z") == Timestamp(std::chrono::milliseconds(1760000000000)));
}

TEST_CASE("record JSON round trip with and without plate data") {
  using testing_support::make_record;
  const VehicleRecord with = make_record("a.jpg", VehicleCategory::FourWheeler, "KA01MJ2022");
  const VehicleRecord without = make_record("b.jpg", VehicleCategory::TwoWheeler, "");
  CHECK(record_from_json(record_to_json(with)) == with);
  CHECK(record_from_json(record_to_json(without)) == without);
  CHECK(record_to_json(without)["plate_reading"].is_null());

  VehicleRecord bad = with;
  bad.plate_quad.reset();
  CHECK(code_of([&] { validate_record(bad); }) == ErrorCode::InvalidArgument);
  bad = with;
  bad.plate_quad = with.plate_quad->translated(1000, 0);
  CHECK(code_of([&] { validate_record(bad); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("record ids are content hashes") {
  const BoundingBox b(1, 2, 3, 4);
  const std::string id = make_record_id("x.png", b, VehicleCategory::FourWheeler);
  CHECK(id.size() == 16);
  CHECK(id == make_record_id("x.png", b, VehicleCategory::FourWheeler));
  CHECK(id != make_record_id("y.png", b, VehicleCategory::FourWheeler));
  CHECK(id != make_record_id("x.png", b, VehicleCategory::TwoWheeler));
}

TEST_CASE("scene JSON round trip") {
  SceneSpec s{640, 480, {}};
  s.objects.push_back({VehicleCategory::ThreeWheeler, BoundingBox(10, 10, 200, 200), 0.8,
                       PlantedPlate{"AB12", Quadrilateral({Point{50, 150}, Point{120, 150}, Point{120, 175},
                                                          Point{50, 175}})}});
  s.objects.push_back({VehicleCategory::GtFourWheeler, BoundingBox(300, 20, 600, 400), 1.0, std::nullopt});
  const SceneSpec back = scene_from_json(scene_to_json(s));
  REQUIRE(back.objects.size() == 2);
  CHECK(back.width == 640);
  CHECK(back.objects[0].plate->text == "AB12");
  CHECK(back.objects[0].plate->quad == s.objects[0].plate->quad);
  CHECK_FALSE(back.objects[1].plate.has_value());
  CHECK(back.objects[1].box == s.objects[1].box);
}
