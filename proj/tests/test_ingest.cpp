#include "doctest.h"
#include "support.hpp"

#include "telecouple/ingest.hpp"
#include "telecouple/io.hpp"

using namespace telecouple;
using testing::code_of;
using testing::scratch;

namespace {

std::filesystem::path put(const std::filesystem::path& dir, const std::string& name,
                          const std::string& text) {
  const auto path = dir / name;
  write_text_file(path, text);
  return path;
}

}  // namespace

TEST_CASE("dates and months") {
  CHECK(day_from_ymd(1970, 1, 1) == 0);
  CHECK(parse_date("2001-03-01") - parse_date("2001-02-28") == 1);
  CHECK(parse_date("2004-03-01") - parse_date("2004-02-28") == 2);
  CHECK(format_date(parse_date("2019-12-31")) == "2019-12-31");
  CHECK(format_month(parse_month("2005-03")) == "2005-03");
  CHECK(days_in_month(parse_month("2004-02")) == 29);
  CHECK(days_in_month(parse_month("2005-04")) == 30);
  CHECK(month_of_day(parse_date("2005-03-31")) == parse_month("2005-03"));
  CHECK(code_of([] { parse_date("2005-13-01"); }) == ErrorCode::SchemaError);
  CHECK(code_of([] { parse_date("yesterday"); }) == ErrorCode::SchemaError);
}

TEST_CASE("city registry loading") {
  const auto dir = scratch("ingest_cities");
  SUBCASE("three valid rows") {
    const auto path = put(dir, "c.csv",
                          "city_id,longitude,latitude,pop_2005\n"
                          "A,-40,-10,1000\nB,-41,-11,2000\nC,-42,-12,3000\n");
    const CityRegistry reg = load_city_registry(path);
    CHECK(reg.size() == 3);
    CHECK(reg[1].id == "B");
    CHECK(reg[2].longitude == -42.0);
    CHECK(reg.population(0, 2005) == 1000.0);
    CHECK(*reg.find("C") == 2);
    CHECK_FALSE(reg.find("Z").has_value());
    CHECK(code_of([&] { reg.population(0, 2006); }) == ErrorCode::MissingPopulation);
  }
  SUBCASE("latitude out of range") {
    const auto path = put(dir, "c.csv", "city_id,longitude,latitude,pop_2005\nA,-40,95,1000\n");
    CHECK(code_of([&] { load_city_registry(path); }) == ErrorCode::CoordinateOutOfRange);
  }
  SUBCASE("duplicate id") {
    const auto path =
        put(dir, "c.csv", "city_id,longitude,latitude,pop_2005\nA,-40,-10,1\nA,-41,-11,2\n");
    CHECK(code_of([&] { load_city_registry(path); }) == ErrorCode::DuplicateId);
  }
  SUBCASE("negative population") {
    const auto path = put(dir, "c.csv", "city_id,longitude,latitude,pop_2005\nA,-40,-10,-1\n");
    CHECK(code_of([&] { load_city_registry(path); }) == ErrorCode::SchemaError);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { load_city_registry(dir / "nope.csv"); }) == ErrorCode::FileNotFound);
  }
  SUBCASE("round trip is byte identical") {
    const std::string text =
        "city_id,longitude,latitude,pop_2001,pop_2002\n"
        "A,-40.25,-10.125,1000,1100\nB,-41.5,-11,2000.5,2100\n";
    const auto path = put(dir, "c.csv", text);
    CHECK(write_city_registry(load_city_registry(path)) == text);
  }
}

TEST_CASE("wind sample loading") {
  const auto dir = scratch("ingest_wind");
  const auto cities = put(dir, "c.csv", "city_id,longitude,latitude,pop_2001\nA,-40,-10,1\nB,-41,-11,1\n");
  const CityRegistry reg = load_city_registry(cities);
  SUBCASE("stored verbatim") {
    const auto path = put(dir, "w.csv", "location_id,date,u_ms,v_ms\nA,2001-01-01,1,0\n");
    const WindSampleTable t = load_wind_samples(path, reg);
    REQUIRE(t.size() == 1);
    const WindSample& s = t.records()[0];
    CHECK(s.location_id == "A");
    CHECK(s.day == parse_date("2001-01-01"));
    CHECK(s.u == 1.0);
    CHECK(s.v == 0.0);
    CHECK(s.longitude == -40.0);
  }
  SUBCASE("grid point locations") {
    const auto path = put(dir, "w.csv", "location_id,date,u_ms,v_ms\npt:-39.5:-9.25,2001-01-01,2,3\n");
    const WindSampleTable t = load_wind_samples(path, reg);
    CHECK(t.records()[0].longitude == -39.5);
    CHECK(t.records()[0].latitude == -9.25);
  }
  SUBCASE("duplicate key") {
    const auto path =
        put(dir, "w.csv", "location_id,date,u_ms,v_ms\nA,2001-01-01,1,0\nA,2001-01-01,2,0\n");
    CHECK(code_of([&] { load_wind_samples(path, reg); }) == ErrorCode::DuplicateKey);
  }
  SUBCASE("non-finite component") {
    const auto path = put(dir, "w.csv", "location_id,date,u_ms,v_ms\nA,2001-01-01,nan,0\n");
    CHECK(code_of([&] { load_wind_samples(path, reg); }) == ErrorCode::NonFiniteValue);
  }
  SUBCASE("unknown location") {
    const auto path = put(dir, "w.csv", "location_id,date,u_ms,v_ms\nQ,2001-01-01,1,0\n");
    CHECK(code_of([&] { load_wind_samples(path, reg); }) == ErrorCode::UnknownLocation);
  }
  SUBCASE("round trip is byte identical") {
    const std::string text =
        "location_id,date,u_ms,v_ms\nA,2001-01-01,1.5,-0.25\nB,2001-01-01,0,3\nA,2001-01-02,2,2\n";
    const auto path = put(dir, "w.csv", text);
    const WindSampleTable t = load_wind_samples(path, reg);
    CHECK(write_wind_samples(t) == text);
    CHECK(t.days().size() == 2);
    CHECK(t.on_day(parse_date("2001-01-01")).size() == 2);
  }
}

TEST_CASE("panel loading with roles") {
  const auto dir = scratch("ingest_panel");
  RoleDeclaration roles{{"region", {Role::Fe}},
                        {"year", {Role::Fe}},
                        {"y", {Role::Outcome}},
                        {"x", {Role::Regressor}}};
  SUBCASE("four declared columns") {
    const auto path = put(dir, "p.csv", "region,year,y,x\nA,2001,1,2\nA,2002,3,4\nB,2001,5,6\n");
    const PanelTable p = load_panel(path, roles);
    CHECK(p.rows() == 3);
    CHECK(p.categorical("region").n_levels() == 2);
    CHECK(p.numeric("x")(2) == 6.0);
  }
  SUBCASE("missing outcome cell") {
    const auto path = put(dir, "p.csv", "region,year,y,x\nA,2001,,2\n");
    CHECK(code_of([&] { load_panel(path, roles); }) == ErrorCode::MissingValue);
  }
  SUBCASE("negative weight") {
    roles["w"] = {Role::Weight};
    const auto path = put(dir, "p.csv", "region,year,y,x,w\nA,2001,1,2,-1\n");
    CHECK(code_of([&] { load_panel(path, roles); }) == ErrorCode::NegativeWeight);
  }
  SUBCASE("declared column absent") {
    roles["z"] = {Role::Instrument};
    const auto path = put(dir, "p.csv", "region,year,y,x\nA,2001,1,2\n");
    CHECK(code_of([&] { load_panel(path, roles); }) == ErrorCode::SchemaError);
  }
  SUBCASE("role sidecar parsing") {
    const auto decl = parse_role_declaration(
        nlohmann::json::parse(R"({"roles": {"a": "fe", "b": ["fe", "cluster"]}})"));
    CHECK(decl.at("a") == std::vector<Role>{Role::Fe});
    CHECK(decl.at("b") == std::vector<Role>{Role::Fe, Role::Cluster});
    CHECK(code_of([] { parse_role("bogus"); }) == ErrorCode::SchemaError);
  }
  SUBCASE("categorical interaction") {
    const auto a = Categorical::from_labels({"x", "x", "y", "y"});
    const auto b = Categorical::from_labels({"1", "2", "1", "1"});
    const auto ab = Categorical::interact({&a, &b});
    CHECK(ab.n_levels() == 3);
    CHECK(ab.codes[2] == ab.codes[3]);
    CHECK(ab.codes[0] != ab.codes[1]);
  }
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  cfg.n_cities = 2;
  cfg.n_days = 7;
  cfg.wind_regime = WindRegime::Constant;
  cfg.wind_u = 5.0;
  cfg.wind_v = 0.0;
  cfg.seed = 1;
  SUBCASE("constant regime") {
    const SynthOutput out = generate_synthetic(cfg);
    REQUIRE(out.wind.size() == 14);
    for (const auto& s : out.wind.records()) {
      CHECK(s.u == 5.0);
      CHECK(s.v == 0.0);
    }
  }
  SUBCASE("deterministic") {
    cfg.wind_regime = WindRegime::RandomSmooth;
    const SynthOutput a = generate_synthetic(cfg);
    const SynthOutput b = generate_synthetic(cfg);
    CHECK(write_city_registry(a.registry) == write_city_registry(b.registry));
    CHECK(write_wind_samples(a.wind) == write_wind_samples(b.wind));
    CHECK(write_panel(a.panel) == write_panel(b.panel));
  }
  SUBCASE("one city rejected") {
    cfg.n_cities = 1;
    CHECK(code_of([&] { generate_synthetic(cfg); }) == ErrorCode::InvalidConfig);
  }
}
