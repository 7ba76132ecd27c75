#include "telecouple/cli.hpp"

#include "telecouple/accounting.hpp"
#include "telecouple/aoe.hpp"
#include "telecouple/econometrics.hpp"
#include "telecouple/ingest.hpp"
#include "telecouple/io.hpp"
#include "telecouple/log.hpp"
#include "telecouple/shiftshare.hpp"
#include "telecouple/windfield.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

namespace telecouple {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound:
      return kExitIo;
    case ErrorCode::NonConvergence:
    case ErrorCode::RankDeficient:
    case ErrorCode::EmptyPanel:
    case ErrorCode::WeakRank:
    case ErrorCode::SingleCluster:
    case ErrorCode::ZeroVariance:
    case ErrorCode::DegenerateExtent:
    case ErrorCode::NoSamplesForDate:
    case ErrorCode::InsufficientPositiveScores:
    case ErrorCode::ZeroBaseExports:
    case ErrorCode::ZeroDenominator:
    case ErrorCode::ZeroExports:
    case ErrorCode::BothZero:
      return kExitNumerical;
    default:
      return kExitValidation;
  }
}

namespace {

const std::set<std::string> kSections = {"inputs", "aoe",     "iv",      "fit",  "placebo",
                                         "balance", "account", "synth",  "seed", "threads",
                                         "out"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) fail(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, "bad value for '" + key + "' in " + where);
  }
}

/// The effective configuration of one run plus where to find things.
struct Run {
  std::string command;
  json config;
  fs::path base;  // relative input paths resolve against this
  fs::path out;
  unsigned threads = 1;
  std::map<std::string, std::string> outputs;  // file -> sha256
  std::ostream* log = nullptr;

  const json& section(const std::string& name) const {
    static const json empty = json::object();
    return config.contains(name) ? config.at(name) : empty;
  }

  std::optional<fs::path> input(const std::string& key) const {
    const json& in = section("inputs");
    if (!in.contains(key)) return std::nullopt;
    const fs::path p = in.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
  }

  fs::path require_input(const std::string& key) const {
    auto p = input(key);
    if (!p) fail(ErrorCode::InvalidConfig, "inputs." + key + " is required for " + command);
    return *p;
  }

  std::uint64_t seed() const {
    if (!config.contains("seed")) {
      fail(ErrorCode::InvalidConfig, command + " needs an explicit seed (--seed or \"seed\")");
    }
    return config.at("seed").get<std::uint64_t>();
  }

  json metadata() const {
    return {{"command", command}, {"version", TELECOUPLE_VERSION}, {"config", config}};
  }

  void emit(const std::string& name, const std::string& contents) {
    write_text_file(out / name, contents);
    outputs[name] = sha256_hex(contents);
    *log << "wrote " << (out / name).string() << '\n';
  }

  void emit_json(const std::string& name, json report) {
    report["metadata"] = metadata();
    emit(name, report.dump(2) + "\n");
  }

  void finish() {
    json manifest = metadata();
    manifest["outputs"] = outputs;
    write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
  }
};

json roles_json(const PanelTable& panel) {
  json roles = json::object();
  for (const auto& [name, list] : panel.roles()) {
    if (list.size() == 1) {
      roles[name] = std::string(to_string(list[0]));
    } else {
      json arr = json::array();
      for (Role r : list) arr.push_back(std::string(to_string(r)));
      roles[name] = arr;
    }
  }
  return {{"roles", roles}};
}

PanelTable load_panel_input(const Run& run) {
  const fs::path panel_path = run.require_input("panel");
  RoleDeclaration roles;
  if (const auto r = run.input("roles")) roles = load_role_declaration(*r);
  return load_panel(panel_path, roles);
}

ShiftShareInputs load_shiftshare_inputs(const Run& run) {
  ShiftShareInputs in;
  in.trade = load_trade(run.require_input("trade"));
  in.imports = load_imports(run.require_input("imports"));
  in.population = load_region_population(run.require_input("population"));
  return in;
}

DesignSpec design_of(const json& section, const std::string& where) {
  if (!section.contains("design")) fail(ErrorCode::InvalidConfig, where + ".design is required");
  return design_from_json(section.at("design"));
}

// ---------------------------------------------------------------------------

ScoreParams score_params_of(const json& aoe) {
  ScoreParams p = score_params_preset(get_or<std::string>(aoe, "params", "default", "aoe"));
  p.alpha = get_or(aoe, "alpha", p.alpha, "aoe");
  p.beta = get_or(aoe, "beta", p.beta, "aoe");
  p.gamma = get_or(aoe, "gamma", p.gamma, "aoe");
  p.rad0 = get_or(aoe, "rad0", p.rad0, "aoe");
  p.rad_inc = get_or(aoe, "rad_inc", p.rad_inc, "aoe");
  p.max_offaxis = get_or(aoe, "max_offaxis", p.max_offaxis, "aoe");
  p.n_steps = get_or(aoe, "n_steps", p.n_steps, "aoe");
  p.calm_speed_eps = get_or(aoe, "calm_speed_eps", p.calm_speed_eps, "aoe");
  p.validate();
  return p;
}

json to_json(const ScoreParams& p) {
  return {{"alpha", p.alpha},     {"beta", p.beta},       {"gamma", p.gamma},
          {"rad0", p.rad0},       {"rad_inc", p.rad_inc}, {"max_offaxis", p.max_offaxis},
          {"n_steps", p.n_steps}, {"calm_speed_eps", p.calm_speed_eps}};
}

void cmd_aoe_build(Run& run) {
  const json& aoe = run.section("aoe");
  check_keys(aoe,
             {"params", "alpha", "beta", "gamma", "rad0", "rad_inc", "max_offaxis", "n_steps",
              "calm_speed_eps", "grid_res", "period", "heatmap", "grid_dump"},
             "aoe");
  const ScoreParams params = score_params_of(aoe);
  const int res = get_or(aoe, "grid_res", 64, "aoe");
  std::optional<std::pair<MonthNumber, MonthNumber>> period;
  if (aoe.contains("period")) {
    const auto p = get_or<std::vector<std::string>>(aoe, "period", {}, "aoe");
    if (p.size() != 2) fail(ErrorCode::InvalidConfig, "aoe.period must be [first, last] months");
    period = {parse_month(p[0]), parse_month(p[1])};
    if (period->second < period->first) fail(ErrorCode::InvalidConfig, "aoe.period is reversed");
  }

  const CityRegistry registry = load_city_registry(run.require_input("cities"));
  const WindSampleTable wind = load_wind_samples(run.require_input("wind"), registry);
  const GridSpec grid = build_grid(registry, res);
  const WindFields fields = rasterize_days(wind, wind.days(), grid, run.threads);
  const AoeResult result = build_aoe(registry, fields, params, run.threads, period);

  const std::string monthly_csv = write_monthly_csv(result.monthly, registry);
  const std::string daily_csv = write_daily_csv(result.daily, registry);
  run.emit("aoe_monthly.csv", monthly_csv);
  run.emit("aoe_daily.csv", daily_csv);

  json report;
  std::string bins_csv;
  if (result.bins) {
    bins_csv = write_bin_assignments(assign_bins(result.monthly, *result.bins, registry));
    run.emit("aoe_bins.csv", bins_csv);
    report["cuts"] = result.bins->cuts;
  } else {
    warn("too few positive monthly scores for decile bins; aoe_bins.csv not written");
    report["cuts"] = nullptr;
  }
  report["content_hash"] = sha256_hex(monthly_csv + daily_csv + bins_csv);
  report["params"] = to_json(params);
  report["grid"] = {{"lon_min", grid.lon_min}, {"lat_min", grid.lat_min},
                    {"spacing", grid.spacing}, {"n_lon", grid.n_lon},
                    {"n_lat", grid.n_lat},     {"res", grid.res}};
  report["period"] = {format_month(result.monthly.first_month),
                      format_month(result.monthly.last_month)};
  report["counts"] = {{"raw", result.raw.size()},
                      {"daily", result.daily.entries.size()},
                      {"monthly", result.monthly.entries.size()},
                      {"days", fields.size()}};

  if (aoe.contains("heatmap")) {
    const json& h = aoe.at("heatmap");
    check_keys(h, {"sender", "date"}, "aoe.heatmap");
    const auto sender = registry.find(get_or<std::string>(h, "sender", "", "aoe.heatmap"));
    if (!sender) fail(ErrorCode::UnknownSender, "heatmap sender not in registry");
    const DayNumber day = parse_date(get_or<std::string>(h, "date", "", "aoe.heatmap"));
    run.emit("heatmap.csv",
             write_heatmap_csv(simulate_heatmap(*sender, day, fields, registry, params), grid));
  }
  if (get_or(aoe, "grid_dump", false, "aoe")) {
    std::string dump;
    bool first = true;
    for (const auto& [_, g] : fields) {
      dump += write_grid_dump(g, first);
      first = false;
    }
    run.emit("grid_dump.csv", dump);
  }
  run.emit_json("aoe.json", report);
  *run.log << "content hash " << report["content_hash"].get<std::string>() << '\n';
}

void cmd_iv(Run& run) {
  const json& iv = run.section("iv");
  check_keys(iv, {"years", "horizon", "shift_window"}, "iv");
  const int horizon = get_or(iv, "horizon", 4, "iv");
  std::optional<std::pair<int, int>> window;
  if (iv.contains("shift_window")) {
    const auto w = get_or<std::vector<int>>(iv, "shift_window", {}, "iv");
    if (w.size() != 2) fail(ErrorCode::InvalidConfig, "iv.shift_window must be [start, end]");
    window = {w[0], w[1]};
  }
  const ShiftShareInputs inputs = load_shiftshare_inputs(run);
  std::vector<int> years = get_or<std::vector<int>>(iv, "years", {}, "iv");
  if (years.empty()) {
    // Every year whose base year and shift window are covered by the data.
    std::set<int> trade_years, import_years;
    for (const auto& [k, _] : inputs.trade.flows()) trade_years.insert(k.year);
    for (const auto& [k, _] : inputs.imports.values()) import_years.insert(k.second);
    const auto [s0, s1] = window.value_or(std::pair{0, horizon});
    for (int y : import_years) {
      if (trade_years.count(y - horizon) && import_years.count(y + s0) && import_years.count(y + s1)) {
        years.push_back(y);
      }
    }
    if (years.empty()) fail(ErrorCode::MissingYear, "no year has both base shares and shifts");
  }
  IVSeries all;
  for (int y : years) {
    const IVSeries part = build_iv(inputs, y, horizon, window);
    all.insert(all.end(), part.begin(), part.end());
  }
  run.emit("iv.csv", write_iv(all));
  run.emit_json("iv.json", {{"years", years}, {"horizon", horizon}, {"records", all.size()}});
}

void cmd_fit(Run& run) {
  const json& fit = run.section("fit");
  check_keys(fit, {"estimator", "design", "downwind"}, "fit");
  const std::string estimator = get_or<std::string>(fit, "estimator", "ols", "fit");
  const PanelTable panel = load_panel_input(run);
  if (estimator == "downwind-bins") {
    if (!fit.contains("downwind")) fail(ErrorCode::InvalidConfig, "fit.downwind is required");
    const DownwindBinResult result = fit_downwind_bins(panel, downwind_spec_from_json(fit.at("downwind")));
    run.emit("bins.csv", write_bin_csv(result));
    json bins = json::array();
    for (const auto& b : result.bins) {
      bins.push_back({{"bin", b.bin}, {"coef", b.dropped ? json() : json(b.coef)},
                      {"se", b.dropped ? json() : json(b.se)}, {"dropped", b.dropped}});
    }
    run.emit_json("fit.json", {{"estimator", estimator}, {"bins", bins}, {"fit", to_json(result.fit)}});
    return;
  }
  const DesignSpec spec = design_of(fit, "fit");
  FitResult result;
  if (estimator == "ols") {
    result = ols(panel, spec);
  } else if (estimator == "tsls") {
    result = tsls(panel, spec);
  } else {
    fail(ErrorCode::InvalidConfig, "fit.estimator must be ols, tsls or downwind-bins");
  }
  run.emit_json("fit.json", {{"estimator", estimator}, {"design", to_json(spec)}, {"fit", to_json(result)}});
}

void cmd_placebo(Run& run) {
  const json& pl = run.section("placebo");
  check_keys(pl, {"reps", "levels", "iv_column", "region_column", "year_column", "horizon", "design"},
             "placebo");
  const int reps = get_or(pl, "reps", 1000, "placebo");
  const auto levels = get_or<std::vector<double>>(pl, "levels", {0.05, 0.01}, "placebo");
  const auto iv_column = get_or<std::string>(pl, "iv_column", "iv", "placebo");
  const auto region_column = get_or<std::string>(pl, "region_column", "region", "placebo");
  const auto year_column = get_or<std::string>(pl, "year_column", "year", "placebo");
  const int horizon = get_or(pl, "horizon", 4, "placebo");
  const DesignSpec spec = design_of(pl, "placebo");
  const std::uint64_t seed = run.seed();
  if (reps < 1) fail(ErrorCode::InvalidReps, "placebo.reps must be positive");

  const PanelTable panel = load_panel_input(run);
  const ShiftShareInputs inputs = load_shiftshare_inputs(run);
  const PlaceboDesign design = placebo_design(panel, region_column, year_column, inputs, horizon);
  const PlaceboResult result =
      placebo_rejection(panel, spec, iv_column, design, reps, seed, levels, run.threads);

  json rates = json::array();
  for (std::size_t k = 0; k < levels.size(); ++k) {
    // Exact binomial 99% acceptance band for a correctly sized test.
    const boost::math::binomial_distribution<double> dist(reps, levels[k]);
    const double lo = boost::math::quantile(dist, 0.005) / reps;
    const double hi = boost::math::quantile(boost::math::complement(dist, 0.005)) / reps;
    rates.push_back({{"level", levels[k]},
                     {"rejection_rate", result.rejection_rates[k]},
                     {"binomial_99", {lo, hi}}});
  }
  std::ostringstream csv;
  csv << "rep,coef,p\n";
  for (int r = 0; r < reps; ++r) {
    csv << r << ',' << format_number(result.coefficients[std::size_t(r)]) << ','
        << format_number(result.p_values[std::size_t(r)]) << '\n';
  }
  run.emit("placebo_reps.csv", csv.str());
  run.emit_json("placebo.json", {{"reps", reps}, {"shock_keys", design.keys.size()}, {"rates", rates}});
}

void cmd_balance(Run& run) {
  const json& b = run.section("balance");
  check_keys(b, {"characteristics", "iv_column", "design"}, "balance");
  const auto chars = get_or<std::vector<std::string>>(b, "characteristics", {}, "balance");
  if (chars.empty()) fail(ErrorCode::InvalidConfig, "balance.characteristics is empty");
  const auto iv_column = get_or<std::string>(b, "iv_column", "iv", "balance");
  DesignSpec base;
  if (b.contains("design")) {
    json d = b.at("design");
    if (!d.contains("outcome")) d["outcome"] = chars.front();
    base = design_from_json(d);
  }
  const PanelTable panel = load_panel_input(run);
  const auto rows = balance_test(panel, chars, iv_column, base);
  run.emit("balance.csv", write_balance(rows));
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"characteristic", r.characteristic}, {"coef", r.coef}, {"se", r.se},
                   {"p", r.p}, {"q", r.q}});
  }
  run.emit_json("balance.json", {{"rows", out}});
}

void cmd_account(Run& run) {
  const json& a = run.section("account");
  check_keys(a, {"scope", "reference", "vsl", "export_total", "mode", "beta_trade"}, "account");
  const StandardizeScope scope = parse_scope(get_or<std::string>(a, "scope", "pooled", "account"));
  const auto reference = get_or<std::string>(a, "reference", "10th", "account");
  const auto mode = get_or<std::string>(a, "mode", "forest", "account");
  if (mode != "forest" && mode != "trade") fail(ErrorCode::InvalidConfig, "account.mode must be forest or trade");
  LedgerInputs in;
  if (a.contains("vsl")) in.vsl = vsl_from_json(a.at("vsl"));
  in.vsl.validate();
  if (a.contains("export_total")) in.export_total = get_or(a, "export_total", 0.0, "account");

  in.coefs = load_coefficients(run.require_input("coefficients"), reference);
  in.assignments = load_bin_assignments(run.require_input("bins"));
  if (const auto cities = run.input("cities")) {
    in.population = registry_population(load_city_registry(*cities));
  } else {
    in.population = load_region_population(run.require_input("population"));
  }
  const RegionYearSeries forest = load_region_series(run.require_input("forest"), "forest");
  if (mode == "forest") {
    in.z_loss = standardize_loss(forest, scope);
  } else {
    if (!a.contains("beta_trade")) fail(ErrorCode::InvalidConfig, "account.beta_trade is required in trade mode");
    const double beta = get_or(a, "beta_trade", 0.0, "account");
    in.trade_shock = load_region_series(run.require_input("trade_shock"), "trade_shock");
    const RegionYearSeries land = load_region_series(run.require_input("land"), "land_ha");
    for (const auto& [key, shock] : in.trade_shock) {
      const auto l = land.find(key);
      if (l == land.end()) {
        fail(ErrorCode::MissingYear, "no land area for '" + key.first + "' in " + std::to_string(key.second));
      }
      const double ha = trade_deforestation(shock, beta, l->second);
      in.deforestation[key] = ha;
      in.z_loss[key] = ha / forest_sd(forest, scope, key.first);
    }
  }

  const DamageLedger ledger = build_ledger(in);
  run.emit("ledger.csv", write_ledger_csv(ledger));
  run.emit("received.csv", write_received_csv(ledger));
  json summary = ledger_summary(ledger);
  summary["mode"] = mode;
  summary["scope"] = std::string(to_string(scope));
  summary["vsl_params"] = to_json(in.vsl);
  summary["coefficients"] = in.coefs;
  if (mode == "trade") {
    summary["deforestation_conversion"] = "z_loss = hectares / forest sd in scope";
  }
  run.emit_json("account.json", summary);
  *run.log << "total excess deaths " << format_number(ledger.total_deaths_by_sender) << ", loss "
           << format_number(ledger.total_loss) << '\n';
}

void cmd_synth(Run& run) {
  const json& s = run.section("synth");
  check_keys(s,
             {"cities", "days", "start", "regime", "wind_u", "wind_v", "first_year", "n_years",
              "panel_regions", "panel_years", "beta", "first_stage", "endogeneity", "noise_sd",
              "shiftshare", "downwind"},
             "synth");
  const std::uint64_t seed = run.seed();
  SynthConfig c;
  c.seed = seed;
  c.n_cities = get_or(s, "cities", c.n_cities, "synth");
  c.n_days = get_or(s, "days", c.n_days, "synth");
  if (s.contains("start")) c.start_day = parse_date(get_or<std::string>(s, "start", "", "synth"));
  if (s.contains("regime")) c.wind_regime = parse_wind_regime(get_or<std::string>(s, "regime", "", "synth"));
  c.wind_u = get_or(s, "wind_u", c.wind_u, "synth");
  c.wind_v = get_or(s, "wind_v", c.wind_v, "synth");
  c.first_year = get_or(s, "first_year", year_of_month(month_of_day(c.start_day)), "synth");
  c.n_years = get_or(s, "n_years", c.n_years, "synth");
  c.panel_regions = get_or(s, "panel_regions", c.panel_regions, "synth");
  c.panel_years = get_or(s, "panel_years", c.panel_years, "synth");
  c.beta = get_or(s, "beta", c.beta, "synth");
  c.first_stage = get_or(s, "first_stage", c.first_stage, "synth");
  c.endogeneity = get_or(s, "endogeneity", c.endogeneity, "synth");
  c.noise_sd = get_or(s, "noise_sd", c.noise_sd, "synth");

  ShiftShareSynthConfig sc;
  sc.seed = seed;
  if (s.contains("shiftshare")) {
    const json& j = s.at("shiftshare");
    check_keys(j, {"regions", "products", "first_year", "n_years", "horizon", "macroregions", "effect"},
               "synth.shiftshare");
    sc.n_regions = get_or(j, "regions", sc.n_regions, "synth.shiftshare");
    sc.n_products = get_or(j, "products", sc.n_products, "synth.shiftshare");
    sc.first_year = get_or(j, "first_year", sc.first_year, "synth.shiftshare");
    sc.n_years = get_or(j, "n_years", sc.n_years, "synth.shiftshare");
    sc.horizon = get_or(j, "horizon", sc.horizon, "synth.shiftshare");
    sc.n_macroregions = get_or(j, "macroregions", sc.n_macroregions, "synth.shiftshare");
    sc.effect = get_or(j, "effect", sc.effect, "synth.shiftshare");
  }
  DownwindSynthConfig dc;
  dc.seed = seed;
  if (s.contains("downwind")) {
    const json& j = s.at("downwind");
    check_keys(j, {"cities", "first_year", "n_years", "calm_share", "effect", "noise_sd"}, "synth.downwind");
    dc.n_cities = get_or(j, "cities", dc.n_cities, "synth.downwind");
    dc.first_year = get_or(j, "first_year", dc.first_year, "synth.downwind");
    dc.n_years = get_or(j, "n_years", dc.n_years, "synth.downwind");
    dc.calm_share = get_or(j, "calm_share", dc.calm_share, "synth.downwind");
    dc.effect = get_or(j, "effect", dc.effect, "synth.downwind");
    dc.noise_sd = get_or(j, "noise_sd", dc.noise_sd, "synth.downwind");
  }

  const SynthOutput base = generate_synthetic(c);
  run.emit("cities.csv", write_city_registry(base.registry));
  run.emit("wind.csv", write_wind_samples(base.wind));
  run.emit("iv_panel.csv", write_panel(base.panel));
  run.emit("iv_panel.roles.json", roles_json(base.panel).dump(2) + "\n");

  const ShiftShareSynth ss = synthesize_shiftshare(sc);
  run.emit("trade.csv", write_trade(ss.inputs.trade));
  run.emit("imports.csv", write_imports(ss.inputs.imports));
  run.emit("region_population.csv", write_region_series(ss.inputs.population, "population"));
  run.emit("ss_panel.csv", write_panel(ss.panel));
  run.emit("ss_panel.roles.json", roles_json(ss.panel).dump(2) + "\n");

  const PanelTable dw = synthesize_downwind(dc);
  run.emit("downwind_panel.csv", write_panel(dw));
  run.emit("downwind_panel.roles.json", roles_json(dw).dump(2) + "\n");

  // Forest cover per city and registry year for the damage ledger.
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0xf0e5u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  RegionYearSeries forest;
  for (const auto& city : base.registry.cities()) {
    for (int y : base.registry.years()) {
      forest[{city.id, y}] = std::round(1e5 * (1.0 + 0.1 * normal(rng)));
    }
  }
  run.emit("forest.csv", write_region_series(forest, "forest"));
  run.emit_json("synth.json", {{"cities", c.n_cities},
                               {"days", c.n_days},
                               {"iv_panel_rows", base.panel.rows()},
                               {"ss_panel_rows", ss.panel.rows()},
                               {"downwind_panel_rows", dw.rows()}});
}

// ---------------------------------------------------------------------------

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string params;
  std::string out;
  std::vector<std::string> inputs;
};

Run prepare(const std::string& command, const Flags& f) {
  Run run;
  run.command = command;
  run.config = json::object();
  run.base = fs::current_path();
  if (!f.config_path.empty()) {
    const std::string text = read_text_file(f.config_path);
    try {
      run.config = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::InvalidConfig, f.config_path + ": " + e.what());
    }
    run.base = fs::absolute(f.config_path).parent_path();
  }
  check_keys(run.config, kSections, "config");
  if (f.seed) run.config["seed"] = *f.seed;
  if (f.threads) run.config["threads"] = *f.threads;
  if (!f.params.empty()) run.config["aoe"]["params"] = f.params;
  if (!f.out.empty()) run.config["out"] = f.out;
  for (const auto& kv : f.inputs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      fail(ErrorCode::InvalidConfig, "--input expects key=path, got '" + kv + "'");
    }
    // Flag paths are relative to the working directory.
    run.config["inputs"][kv.substr(0, eq)] = fs::absolute(kv.substr(eq + 1)).string();
  }
  if (run.config.contains("inputs")) {
    check_keys(run.config["inputs"],
               {"cities", "wind", "panel", "roles", "trade", "imports", "population", "forest",
                "coefficients", "bins", "trade_shock", "land"},
               "inputs");
  }
  const int threads = get_or(run.config, "threads", 1, "config");
  if (threads < 1) fail(ErrorCode::InvalidConfig, "threads must be at least 1");
  run.threads = unsigned(threads);
  if (run.config.contains("seed") && !run.config["seed"].is_number_unsigned()) {
    fail(ErrorCode::InvalidConfig, "seed must be an unsigned integer");
  }
  const std::string out = get_or<std::string>(run.config, "out", "out", "config");
  run.out = fs::path(out).is_absolute() || f.config_path.empty() || !f.out.empty()
                ? fs::path(out)
                : run.base / out;
  return run;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Downwind area-of-effect scores, shift-share instruments and damage accounting",
               "telecouple"};
  app.set_version_flag("--version", std::string(TELECOUPLE_VERSION));
  app.require_subcommand(1);
  Flags flags;
  using Command = void (*)(Run&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"synth", "Write a synthetic input set", cmd_synth},
      {"aoe-build", "Build monthly downwind score matrices and bins", cmd_aoe_build},
      {"iv", "Construct the shift-share instrument", cmd_iv},
      {"fit", "Fit OLS, 2SLS or a downwind bin design", cmd_fit},
      {"placebo", "Placebo-shock rejection rates", cmd_placebo},
      {"balance", "Balance regressions with FDR-adjusted q-values", cmd_balance},
      {"account", "Excess deaths and VSL damage ledger", cmd_account},
  };
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config_path, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "Random seed");
    sub->add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--params", flags.params, "Score parameter preset")
        ->check(CLI::IsMember({"default", "appendix", "main-text"}));
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--input", flags.inputs, "Input override key=path (repeatable)");
    handlers[sub] = fn;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  CLI::App* chosen = app.get_subcommands().front();
  std::vector<std::string> warnings;
  WarningSink previous = set_warning_sink([&](const std::string& msg) {
    warnings.push_back(msg);
    err << "warning: " << msg << '\n';
  });
  int code = kExitOk;
  try {
    Run run = prepare(chosen->get_name(), flags);
    run.log = &out;
    handlers.at(chosen)(run);
    run.finish();
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    code = exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error [InvalidConfig]: " << e.what() << '\n';
    code = kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitOther;
  }
  set_warning_sink(std::move(previous));
  return code;
}

}  // namespace telecouple
