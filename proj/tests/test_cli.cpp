#include "doctest.h"
#include "support.hpp"

#include "telecouple/cli.hpp"

#include <sstream>

using namespace telecouple;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  const fs::path p = dir / name;
  write_text_file(p, j.dump(2));
  return p;
}

std::map<std::tuple<std::string, std::string, std::string>, double> read_scores(const fs::path& p) {
  std::map<std::tuple<std::string, std::string, std::string>, double> m;
  std::istringstream in(read_text_file(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    REQUIRE(f.size() == 4);
    m[{f[0], f[1], f[2]}] = std::stod(f[3]);
  }
  return m;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

}  // namespace

TEST_CASE("exit code families") {
  CHECK(exit_code_for(ErrorCode::FileNotFound) == kExitIo);
  CHECK(exit_code_for(ErrorCode::SchemaError) == kExitValidation);
  CHECK(exit_code_for(ErrorCode::InvalidConfig) == kExitValidation);
  CHECK(exit_code_for(ErrorCode::RankDeficient) == kExitNumerical);
  CHECK(exit_code_for(ErrorCode::ZeroExports) == kExitNumerical);
  const CliRun v = cli({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(TELECOUPLE_VERSION) != std::string::npos);
  CHECK(cli({}).code == kExitValidation);
  CHECK(cli({"nonsense"}).code == kExitValidation);
  CHECK(cli({"aoe-build", "--params", "bogus"}).code == kExitValidation);
}

TEST_CASE("golden three-city scores") {
  const fs::path golden = testing::data_dir() / "golden_3city";
  const fs::path dir = testing::scratch("cli_golden");
  const fs::path cfg = write_config(dir, "run.json",
                                    {{"inputs",
                                      {{"cities", (golden / "cities.csv").string()},
                                       {"wind", (golden / "wind.csv").string()}}},
                                     {"aoe", {{"params", "default"}}},
                                     {"out", "first"}});
  const CliRun a = cli({"aoe-build", "--config", cfg.string()});
  REQUIRE_MESSAGE(a.code == 0, a.err);

  const auto expected = read_scores(golden / "expected_monthly.csv");
  const auto actual = read_scores(dir / "first" / "aoe_monthly.csv");
  REQUIRE(!expected.empty());
  for (const auto& [key, value] : actual) {
    if (value != 0.0) CHECK(expected.count(key) == 1);
  }
  for (const auto& [key, value] : expected) {
    REQUIRE(actual.count(key) == 1);
    CHECK(testing::rel_diff(actual.at(key), value) <= 1e-11);
  }

  const CliRun b = cli({"aoe-build", "--config", cfg.string(), "--out", (dir / "second").string(), "--threads", "3"});
  REQUIRE(b.code == 0);
  const auto h1 = read_json(dir / "first" / "aoe.json").at("content_hash");
  const auto h2 = read_json(dir / "second" / "aoe.json").at("content_hash");
  CHECK(h1 == h2);
  CHECK(read_text_file(dir / "first" / "aoe_monthly.csv") == read_text_file(dir / "second" / "aoe_monthly.csv"));
  const auto manifest = read_json(dir / "first" / "manifest.json");
  CHECK(manifest.at("outputs").contains("aoe_monthly.csv"));
  CHECK(manifest.at("config").at("aoe").at("params") == "default");
}

TEST_CASE("input and validation failures") {
  const fs::path golden = testing::data_dir() / "golden_3city";
  const fs::path dir = testing::scratch("cli_failures");
  SUBCASE("missing wind file names the path") {
    const std::string missing = (dir / "no_such_wind.csv").string();
    const CliRun r = cli({"aoe-build", "--input", "cities=" + (golden / "cities.csv").string(), "--input",
                          "wind=" + missing, "--out", (dir / "o").string()});
    CHECK(r.code == kExitIo);
    CHECK(r.err.find("no_such_wind.csv") != std::string::npos);
  }
  SUBCASE("unknown config key") {
    const fs::path cfg = write_config(dir, "bad.json", {{"aoe", {{"alphaa", 1.0}}}});
    const CliRun r = cli({"aoe-build", "--config", cfg.string()});
    CHECK(r.code == kExitValidation);
    CHECK(r.err.find("alphaa") != std::string::npos);
  }
  SUBCASE("synth without a seed") {
    CHECK(cli({"synth", "--out", (dir / "s").string()}).code == kExitValidation);
  }
}

TEST_CASE("end-to-end pipeline on synthetic data") {
  const fs::path dir = testing::scratch("cli_pipeline");
  const fs::path data = dir / "data";
  const fs::path synth_cfg = write_config(dir, "synth.json",
                                          {{"synth",
                                            {{"cities", 12},
                                             {"days", 31},
                                             {"start", "2003-01-01"},
                                             {"shiftshare", {{"regions", 60}}},
                                             {"downwind", {{"cities", 8}, {"n_years", 2}}}}},
                                           {"out", "data"}});
  const CliRun s = cli({"synth", "--config", synth_cfg.string(), "--seed", "7"});
  REQUIRE_MESSAGE(s.code == 0, s.err);
  for (const char* f : {"cities.csv", "wind.csv", "iv_panel.csv", "trade.csv", "imports.csv", "ss_panel.csv",
                        "downwind_panel.csv", "forest.csv", "synth.json", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(data / f), f);
  }
  const CliRun again = cli({"synth", "--config", synth_cfg.string(), "--seed", "7", "--out", (dir / "again").string()});
  REQUIRE(again.code == 0);
  auto first_outputs = read_json(data / "manifest.json").at("outputs");
  auto second_outputs = read_json(dir / "again" / "manifest.json").at("outputs");
  // synth.json embeds the output directory in its metadata.
  first_outputs.erase("synth.json");
  second_outputs.erase("synth.json");
  CHECK(first_outputs == second_outputs);

  const nlohmann::json ss_inputs = {{"trade", (data / "trade.csv").string()},
                                    {"imports", (data / "imports.csv").string()},
                                    {"population", (data / "region_population.csv").string()},
                                    {"panel", (data / "ss_panel.csv").string()},
                                    {"roles", (data / "ss_panel.roles.json").string()}};
  const nlohmann::json ss_design = {{"fe", {"year", "macroregion"}}, {"cluster", {"region"}}};

  SUBCASE("aoe-build then account") {
    const fs::path aoe_cfg = write_config(
        dir, "aoe.json",
        {{"inputs", {{"cities", (data / "cities.csv").string()}, {"wind", (data / "wind.csv").string()}}},
         {"aoe", {{"grid_res", 24}, {"heatmap", {{"sender", "C000"}, {"date", "2003-01-05"}}}}},
         {"out", "aoe"}});
    const CliRun a = cli({"aoe-build", "--config", aoe_cfg.string()});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(fs::exists(dir / "aoe" / "heatmap.csv"));
    REQUIRE(fs::exists(dir / "aoe" / "aoe_bins.csv"));

    const fs::path fit_cfg = write_config(
        dir, "fit.json",
        {{"inputs", {{"panel", (data / "downwind_panel.csv").string()},
                     {"roles", (data / "downwind_panel.roles.json").string()}}},
         {"fit",
          {{"estimator", "downwind-bins"},
           {"downwind", {{"outcome", "outcome"}, {"exposure", "exposure"}, {"bin_column", "bin"}}}}},
         {"out", "fit"}});
    const CliRun f = cli({"fit", "--config", fit_cfg.string()});
    REQUIRE_MESSAGE(f.code == 0, f.err);
    // The reference bin is normalized to zero and not estimated.
    CHECK(read_json(dir / "fit" / "fit.json").at("bins").size() == 10);

    const nlohmann::json account_inputs = {{"coefficients", (dir / "fit" / "bins.csv").string()},
                                           {"bins", (dir / "aoe" / "aoe_bins.csv").string()},
                                           {"cities", (data / "cities.csv").string()},
                                           {"forest", (data / "forest.csv").string()}};
    const fs::path acc_cfg = write_config(
        dir, "account.json",
        {{"inputs", account_inputs}, {"account", {{"export_total", 1e9}}}, {"out", "account"}});
    const CliRun c = cli({"account", "--config", acc_cfg.string()});
    REQUIRE_MESSAGE(c.code == 0, c.err);
    const auto summary = read_json(dir / "account" / "account.json");
    CHECK(summary.at("total_deaths") == summary.at("total_deaths_by_receiver"));
    CHECK(fs::exists(dir / "account" / "ledger.csv"));
    CHECK(fs::exists(dir / "account" / "received.csv"));

    write_text_file(dir / "empty_coefs.csv", "bin,coef\n");
    nlohmann::json bad_inputs = account_inputs;
    bad_inputs["coefficients"] = (dir / "empty_coefs.csv").string();
    const fs::path bad_cfg = write_config(dir, "account_bad.json", {{"inputs", bad_inputs}, {"out", "bad"}});
    const CliRun bad = cli({"account", "--config", bad_cfg.string()});
    CHECK(bad.code == kExitValidation);
  }

  SUBCASE("iv, fit, placebo and balance") {
    const fs::path iv_cfg = write_config(dir, "iv.json", {{"inputs", ss_inputs}, {"out", "iv"}});
    const CliRun iv = cli({"iv", "--config", iv_cfg.string()});
    REQUIRE_MESSAGE(iv.code == 0, iv.err);
    CHECK(read_json(dir / "iv" / "iv.json").at("records").get<int>() > 0);

    nlohmann::json design = ss_design;
    design["outcome"] = "outcome";
    design["exogenous"] = {"iv"};
    design["weight"] = "weight";
    const fs::path fit_cfg = write_config(
        dir, "fit_ols.json", {{"inputs", ss_inputs}, {"fit", {{"estimator", "ols"}, {"design", design}}}, {"out", "ols"}});
    const CliRun f = cli({"fit", "--config", fit_cfg.string()});
    REQUIRE_MESSAGE(f.code == 0, f.err);
    CHECK(read_json(dir / "ols" / "fit.json").at("fit").at("names").size() == 1);

    nlohmann::json undeclared = design;
    undeclared["exogenous"] = {"not_a_column"};
    const fs::path bad_cfg = write_config(
        dir, "fit_bad.json", {{"inputs", ss_inputs}, {"fit", {{"design", undeclared}}}, {"out", "bad"}});
    CHECK(cli({"fit", "--config", bad_cfg.string()}).code == kExitValidation);

    const fs::path pl_cfg = write_config(
        dir, "placebo.json",
        {{"inputs", ss_inputs}, {"placebo", {{"reps", 40}, {"design", design}}}, {"out", "placebo"}});
    const CliRun p1 = cli({"placebo", "--config", pl_cfg.string(), "--seed", "3", "--threads", "1"});
    REQUIRE_MESSAGE(p1.code == 0, p1.err);
    const CliRun p4 = cli({"placebo", "--config", pl_cfg.string(), "--seed", "3", "--threads", "4", "--out",
                           (dir / "placebo4").string()});
    REQUIRE(p4.code == 0);
    CHECK(read_text_file(dir / "placebo" / "placebo_reps.csv") == read_text_file(dir / "placebo4" / "placebo_reps.csv"));
    CHECK(read_json(dir / "placebo" / "placebo.json").at("rates").size() == 2);
    CHECK(cli({"placebo", "--config", pl_cfg.string()}).code == kExitValidation);

    const fs::path bal_cfg = write_config(
        dir, "balance.json",
        {{"inputs", ss_inputs},
         {"balance", {{"characteristics", {"char_a", "char_b", "char_c"}}, {"design", ss_design}}},
         {"out", "balance"}});
    const CliRun b = cli({"balance", "--config", bal_cfg.string()});
    REQUIRE_MESSAGE(b.code == 0, b.err);
    const auto rows = read_json(dir / "balance" / "balance.json").at("rows");
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) CHECK(r.at("q").get<double>() >= r.at("p").get<double>());
  }
}
