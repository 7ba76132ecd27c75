#pragma once

#include "telecouple/accounting.hpp"
#include "telecouple/aoe.hpp"
#include "telecouple/error.hpp"
#include "telecouple/ingest.hpp"
#include "telecouple/io.hpp"
#include "telecouple/windfield.hpp"

#include "doctest.h"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace telecouple;

inline std::filesystem::path data_dir() { return TEST_DATA_DIR; }

/// Code of the telecouple::Error thrown by `f`; fails the test when none is thrown.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("telecouple_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// A frozen brute-force case: inputs plus expected raw, daily and monthly scores.
struct AoeFixture {
  std::string name;
  ScoreParams params;
  int res = 64;
  CityRegistry registry;
  WindSampleTable samples;
  MonthNumber first_month = 0, last_month = 0;
  nlohmann::json expected;
};

inline std::vector<AoeFixture> load_aoe_fixtures() {
  const auto all = nlohmann::json::parse(read_text_file(data_dir() / "aoe_fixtures.json"));
  std::vector<AoeFixture> out;
  for (const auto& j : all) {
    AoeFixture fx;
    fx.name = j["name"];
    fx.params = score_params_preset(j["preset"].get<std::string>());
    const auto& p = j["params"];
    fx.params.alpha = p["alpha"];
    fx.params.beta = p["beta"];
    fx.params.gamma = p["gamma"];
    fx.params.max_offaxis = p["max_offaxis"];
    fx.params.rad0 = p["rad0"];
    fx.params.rad_inc = p["rad_inc"];
    fx.params.n_steps = p["n_steps"];
    fx.params.calm_speed_eps = p["calm_speed_eps"];
    fx.res = j["res"];
    std::vector<City> cities;
    for (const auto& c : j["cities"]) {
      cities.push_back({c["id"], c["lon"], c["lat"], {{2005, c["pop"].get<double>()}}});
    }
    fx.registry = CityRegistry(cities, {2005});
    std::vector<WindSample> samples;
    for (const auto& s : j["samples"]) {
      const auto idx = *fx.registry.find(s[0].get<std::string>());
      samples.push_back({s[0], fx.registry[idx].longitude, fx.registry[idx].latitude,
                         parse_date(s[1].get<std::string>()), s[2], s[3]});
    }
    fx.samples = WindSampleTable(samples);
    fx.first_month = parse_month(j["period"][0].get<std::string>());
    fx.last_month = parse_month(j["period"][1].get<std::string>());
    fx.expected = j;
    out.push_back(std::move(fx));
  }
  return out;
}

/// Largest relative error between engine output and the fixture, or +inf on
/// a structural mismatch (different keys or counts).
struct AoeComparison {
  double raw = 0.0, daily = 0.0, monthly = 0.0;
  std::string problem;
  double worst() const { return problem.empty() ? std::max({raw, daily, monthly}) : INFINITY; }
};

inline AoeComparison compare_fixture(const AoeFixture& fx, unsigned threads = 1) {
  const GridSpec grid = build_grid(fx.registry, fx.res);
  const WindFields fields = rasterize_days(fx.samples, fx.samples.days(), grid, threads);
  const AoeResult result =
      build_aoe(fx.registry, fields, fx.params, threads, std::pair{fx.first_month, fx.last_month});
  AoeComparison cmp;
  const auto& e = fx.expected;
  if (result.raw.size() != e["raw"].size()) {
    cmp.problem = "raw count " + std::to_string(result.raw.size()) + " vs " +
                  std::to_string(e["raw"].size());
    return cmp;
  }
  for (std::size_t i = 0; i < result.raw.size(); ++i) {
    const auto& x = e["raw"][i];
    const RawScore& r = result.raw[i];
    if (r.sender != x[0].get<unsigned>() || r.receiver != x[1].get<unsigned>() ||
        r.emit_day != parse_date(x[2].get<std::string>()) || r.step != x[3].get<int>()) {
      cmp.problem = "raw key mismatch at " + std::to_string(i);
      return cmp;
    }
    cmp.raw = std::max(cmp.raw, rel_diff(r.value, x[4].get<double>()));
  }
  if (result.daily.entries.size() != e["daily"].size()) {
    cmp.problem = "daily count mismatch";
    return cmp;
  }
  for (std::size_t i = 0; i < result.daily.entries.size(); ++i) {
    const auto& x = e["daily"][i];
    const DailyEntry& d = result.daily.entries[i];
    if (d.sender != x[0].get<unsigned>() || d.receiver != x[1].get<unsigned>() ||
        d.day != parse_date(x[2].get<std::string>())) {
      cmp.problem = "daily key mismatch at " + std::to_string(i);
      return cmp;
    }
    cmp.daily = std::max(cmp.daily, rel_diff(d.score, x[3].get<double>()));
  }
  if (result.monthly.entries.size() != e["monthly"].size()) {
    cmp.problem = "monthly count mismatch";
    return cmp;
  }
  for (std::size_t i = 0; i < result.monthly.entries.size(); ++i) {
    const auto& x = e["monthly"][i];
    const MonthlyEntry& m = result.monthly.entries[i];
    if (m.sender != x[0].get<unsigned>() || m.receiver != x[1].get<unsigned>() ||
        m.month != parse_month(x[2].get<std::string>())) {
      cmp.problem = "monthly key mismatch at " + std::to_string(i);
      return cmp;
    }
    cmp.monthly = std::max(cmp.monthly, rel_diff(m.score, x[3].get<double>()));
  }
  return cmp;
}

/// Random complete bin assignments and inputs for a ledger: every ordered
/// sender/receiver pair over `months` consecutive months from 2005-01, with
/// signed coefficients and z-losses.
inline LedgerInputs random_ledger_inputs(int senders, int receivers, int months, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<int> bin(0, kBinCount - 1);
  std::uniform_real_distribution<double> pop(1e3, 5e6);
  LedgerInputs in;
  for (int b = 0; b < kBinCount; ++b) in.coefs[bin_label(b)] = b == 1 ? 0.0 : 0.3 * n01(rng);
  const MonthNumber first = make_month(2005, 1);
  std::vector<std::string> s_ids, r_ids;
  for (int i = 0; i < senders; ++i) s_ids.push_back("S" + std::to_string(100 + i));
  for (int i = 0; i < receivers; ++i) r_ids.push_back("R" + std::to_string(100 + i));
  const int last_year = year_of_month(first + months - 1);
  for (const auto& s : s_ids) {
    for (int y = 2005; y <= last_year; ++y) in.z_loss[{s, y}] = n01(rng);
  }
  for (const auto& r : r_ids) {
    for (int y = 2005; y <= last_year; ++y) in.population[{r, y}] = std::round(pop(rng));
  }
  for (const auto& s : s_ids)
    for (const auto& r : r_ids)
      for (int m = 0; m < months; ++m) in.assignments.push_back({s, r, first + m, bin_label(bin(rng))});
  return in;
}

/// Dense design helpers for the regression oracles.
inline Categorical categorical(const std::vector<int>& codes) {
  std::vector<std::string> labels;
  for (int c : codes) labels.push_back("g" + std::to_string(c));
  return Categorical::from_labels(labels);
}

}  // namespace testing
