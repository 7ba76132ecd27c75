#include "telecouple/shiftshare.hpp"

#include "telecouple/error.hpp"
#include "telecouple/io.hpp"
#include "telecouple/log.hpp"
#include "telecouple/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace telecouple {

namespace {

int require_year(const std::string& cell, const std::string& where) {
  const auto v = parse_double(cell);
  if (!v || *v != std::floor(*v)) fail(ErrorCode::SchemaError, where + ": bad year '" + cell + "'");
  return static_cast<int>(*v);
}

double require_value(const std::string& cell, const std::string& where) {
  const auto v = parse_double(cell);
  if (!v) fail(ErrorCode::MissingValue, where + ": missing or non-numeric value");
  if (!std::isfinite(*v)) fail(ErrorCode::NonFiniteValue, where + ": non-finite value");
  return *v;
}

void expect_header(const CsvTable& csv, const std::vector<std::string>& header,
                   const std::filesystem::path& path) {
  if (csv.header != header) {
    std::string joined;
    for (const auto& h : header) joined += (joined.empty() ? "" : ",") + h;
    fail(ErrorCode::SchemaError, path.string() + ": header must be " + joined);
  }
}

std::string at_line(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::seed_seq make_seed(std::uint64_t seed, std::uint64_t stream) {
  return std::seed_seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                       std::uint32_t(stream >> 32)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Tables

void TradeTable::add(const std::string& region, const std::string& product, int year, double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    fail(ErrorCode::SchemaError, "export value for " + region + "/" + product + "/" +
                                     std::to_string(year) + " must be finite and >= 0");
  }
  if (!flows_.emplace(Key{region, product, year}, value).second) {
    fail(ErrorCode::DuplicateKey,
         "duplicate trade flow " + region + "/" + product + "/" + std::to_string(year));
  }
}

std::vector<std::string> TradeTable::regions() const {
  std::set<std::string> out;
  for (const auto& [k, _] : flows_) out.insert(k.region);
  return {out.begin(), out.end()};
}

std::vector<std::string> TradeTable::products() const {
  std::set<std::string> out;
  for (const auto& [k, _] : flows_) out.insert(k.product);
  return {out.begin(), out.end()};
}

std::map<std::string, double> TradeTable::exports_of(const std::string& region, int year) const {
  std::map<std::string, double> out;
  for (auto it = flows_.lower_bound(Key{region, "", year}); it != flows_.end(); ++it) {
    if (it->first.region != region) break;
    if (it->first.year == year) out[it->first.product] = it->second;
  }
  return out;
}

void ImportSeries::add(const std::string& product, int year, double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    fail(ErrorCode::SchemaError, "import value for " + product + " must be finite and >= 0");
  }
  if (!values_.emplace(std::pair{product, year}, value).second) {
    fail(ErrorCode::DuplicateKey, "duplicate import record " + product + "/" + std::to_string(year));
  }
}

double ImportSeries::at(const std::string& product, int year) const {
  const auto it = values_.find({product, year});
  if (it == values_.end()) {
    fail(ErrorCode::MissingYear, "no import value for " + product + " in " + std::to_string(year));
  }
  return it->second;
}

TradeTable load_trade(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  expect_header(csv, {"region_id", "product_id", "year", "export_value"}, path);
  TradeTable trade;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto where = at_line(path, csv.line_numbers[r]);
    trade.add(row[0], row[1], require_year(row[2], where), require_value(row[3], where));
  }
  return trade;
}

ImportSeries load_imports(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  expect_header(csv, {"product_id", "year", "import_value"}, path);
  ImportSeries imports;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto where = at_line(path, csv.line_numbers[r]);
    imports.add(row[0], require_year(row[1], where), require_value(row[2], where));
  }
  return imports;
}

RegionYearSeries load_region_series(const std::filesystem::path& path,
                                    const std::string& value_column) {
  const CsvTable csv = read_csv(path);
  expect_header(csv, {"region_id", "year", value_column}, path);
  RegionYearSeries out;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto where = at_line(path, csv.line_numbers[r]);
    if (!out.emplace(RegionYear{row[0], require_year(row[1], where)}, require_value(row[2], where))
             .second) {
      fail(ErrorCode::DuplicateKey, where + ": duplicate (region, year)");
    }
  }
  return out;
}

RegionYearSeries load_region_population(const std::filesystem::path& path) {
  auto pop = load_region_series(path, "population");
  for (const auto& [key, value] : pop) {
    if (value < 0.0) fail(ErrorCode::SchemaError, "negative population for " + key.first);
  }
  return pop;
}

std::string write_trade(const TradeTable& trade) {
  std::ostringstream out;
  out << "region_id,product_id,year,export_value\n";
  for (const auto& [k, v] : trade.flows()) {
    out << k.region << ',' << k.product << ',' << k.year << ',' << format_number(v) << '\n';
  }
  return out.str();
}

std::string write_imports(const ImportSeries& imports) {
  std::ostringstream out;
  out << "product_id,year,import_value\n";
  for (const auto& [k, v] : imports.values()) {
    out << k.first << ',' << k.second << ',' << format_number(v) << '\n';
  }
  return out.str();
}

std::string write_region_series(const RegionYearSeries& series, const std::string& value_column) {
  std::ostringstream out;
  out << "region_id,year," << value_column << '\n';
  for (const auto& [k, v] : series) out << k.first << ',' << k.second << ',' << format_number(v) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Instrument construction

double dh_growth(double start, double end) {
  if (!(start >= 0.0) || !(end >= 0.0)) {
    fail(ErrorCode::InvalidArgument, "growth endpoints must be non-negative");
  }
  if (start == 0.0 && end == 0.0) fail(ErrorCode::BothZero, "both endpoints are zero");
  return (end - start) / (0.5 * (end + start));
}

std::map<std::string, double> build_shares(const TradeTable& trade, const std::string& region,
                                           int base_year) {
  auto exports = trade.exports_of(region, base_year);
  double total = 0.0;
  for (const auto& [_, v] : exports) total += v;
  if (!(total > 0.0)) {
    fail(ErrorCode::ZeroBaseExports,
         "region '" + region + "' has no exports in " + std::to_string(base_year));
  }
  for (auto& [_, v] : exports) v /= total;
  return exports;
}

ExposureMatrix exposure_matrix(const TradeTable& trade, const RegionYearSeries& population,
                               int base_year, std::span<const std::string> products) {
  ExposureMatrix out;
  out.regions = trade.regions();
  out.products.assign(products.begin(), products.end());
  out.weights = Matrix::Zero(Index(out.regions.size()), Index(products.size()));
  out.exposure = Vector::Zero(Index(out.regions.size()));
  std::map<std::string, Index> column;
  for (std::size_t j = 0; j < products.size(); ++j) column[products[j]] = Index(j);
  for (std::size_t i = 0; i < out.regions.size(); ++i) {
    const std::string& region = out.regions[i];
    const auto exports = trade.exports_of(region, base_year);
    double total = 0.0;
    for (const auto& [_, v] : exports) total += v;
    if (!(total > 0.0)) continue;  // formula limit: zero exposure
    const auto pop = population.find({region, base_year});
    if (pop == population.end()) {
      fail(ErrorCode::MissingYear,
           "no population for '" + region + "' in " + std::to_string(base_year));
    }
    if (!(pop->second > 0.0)) {
      fail(ErrorCode::ZeroPopulation,
           "population of '" + region + "' is zero in " + std::to_string(base_year));
    }
    const double exposure = total / pop->second;
    out.exposure[Index(i)] = exposure;
    for (const auto& [product, value] : exports) {
      const auto col = column.find(product);
      if (col == column.end()) {
        if (value > 0.0) {
          fail(ErrorCode::MissingYear, "product '" + product + "' has no import series");
        }
        continue;
      }
      out.weights(Index(i), col->second) = value / total * exposure;
    }
  }
  return out;
}

Vector import_shifts(const ImportSeries& imports, std::span<const std::string> products,
                     int start_year, int end_year) {
  Vector g(Index(products.size()));
  for (std::size_t j = 0; j < products.size(); ++j) {
    g[Index(j)] = dh_growth(imports.at(products[j], start_year), imports.at(products[j], end_year));
  }
  return g;
}

IVSeries build_iv(const ShiftShareInputs& inputs, int year, int horizon,
                  std::optional<std::pair<int, int>> shift_window) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be positive");
  const auto [s0, s1] = shift_window.value_or(std::pair{0, horizon});
  const int base_year = year - horizon;
  // Only products with positive base-year exports somewhere need shifts.
  std::set<std::string> used;
  for (const auto& [k, v] : inputs.trade.flows()) {
    if (k.year == base_year && v > 0.0) used.insert(k.product);
  }
  const std::vector<std::string> products(used.begin(), used.end());
  const ExposureMatrix em = exposure_matrix(inputs.trade, inputs.population, base_year, products);
  const Vector shifts = import_shifts(inputs.imports, products, year + s0, year + s1);
  const Vector iv = em.weights * shifts;
  IVSeries out;
  for (std::size_t i = 0; i < em.regions.size(); ++i) {
    if (em.exposure[Index(i)] == 0.0) {
      warn("region '" + em.regions[i] + "' has no exports in " + std::to_string(base_year) +
           "; instrument set to 0");
    }
    out.push_back({em.regions[i], year, iv[Index(i)]});
  }
  return out;
}

std::string write_iv(const IVSeries& iv) {
  std::ostringstream out;
  out << "region_id,year,iv\n";
  for (const auto& r : iv) out << r.region << ',' << r.year << ',' << format_number(r.iv) << '\n';
  return out.str();
}

RegionYearSeries long_difference(const RegionYearSeries& series, int horizon,
                                 const RegionYearSeries* denominator) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be positive");
  RegionYearSeries out;
  for (const auto& [key, value] : series) {
    const auto later = series.find({key.first, key.second + horizon});
    if (later == series.end()) continue;
    double diff = later->second - value;
    if (denominator) {
      const auto d = denominator->find(key);
      if (d == denominator->end()) {
        fail(ErrorCode::MissingYear, "no denominator for '" + key.first + "' in " +
                                         std::to_string(key.second));
      }
      if (d->second == 0.0) {
        fail(ErrorCode::ZeroDenominator, "denominator is zero for '" + key.first + "' in " +
                                             std::to_string(key.second));
      }
      diff = diff / d->second * 100.0;
    }
    out.emplace(key, diff);
  }
  if (out.empty() && !series.empty()) {
    fail(ErrorCode::MissingYear, "no (y, y + " + std::to_string(horizon) + ") pairs in series");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

ShockVector draw_placebo_shocks(std::span<const std::string> keys, std::uint64_t seed,
                                std::uint64_t stream) {
  auto seq = make_seed(seed, stream);
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, std::sqrt(5.0));
  ShockVector out;
  out.keys.assign(keys.begin(), keys.end());
  out.shocks.resize(Index(keys.size()));
  for (Index j = 0; j < out.shocks.size(); ++j) out.shocks[j] = normal(rng);
  return out;
}

PlaceboDesign placebo_design(const PanelTable& panel, const std::string& region_column,
                             const std::string& year_column, const ShiftShareInputs& inputs,
                             int horizon) {
  const Categorical& regions = panel.categorical(region_column);
  const Categorical& years = panel.categorical(year_column);
  const auto products = inputs.trade.products();
  std::set<int> panel_years;
  for (const auto& label : years.levels) {
    const auto y = parse_double(label);
    if (!y) fail(ErrorCode::SchemaError, "year label '" + label + "' is not numeric");
    panel_years.insert(int(*y));
  }
  PlaceboDesign design;
  std::map<int, ExposureMatrix> by_year;
  std::map<int, Index> first_key;
  for (int y : panel_years) {
    by_year.emplace(y, exposure_matrix(inputs.trade, inputs.population, y - horizon, products));
    first_key[y] = Index(design.keys.size());
    for (const auto& p : products) design.keys.push_back(p + "@" + std::to_string(y));
  }
  std::map<std::string, Index> region_row;
  const auto& region_list = by_year.begin()->second.regions;
  for (std::size_t i = 0; i < region_list.size(); ++i) region_row[region_list[i]] = Index(i);

  const auto n = Index(panel.rows());
  design.row_weights = Matrix::Zero(n, Index(design.keys.size()));
  for (Index i = 0; i < n; ++i) {
    const std::string& region = regions.levels[std::size_t(regions.codes[std::size_t(i)])];
    const int year = int(*parse_double(years.levels[std::size_t(years.codes[std::size_t(i)])]));
    const auto row = region_row.find(region);
    if (row == region_row.end()) continue;  // no trade at all: zero exposure
    design.row_weights.row(i).segment(first_key[year], Index(products.size())) =
        by_year.at(year).weights.row(row->second);
  }
  return design;
}

PlaceboResult placebo_rejection(const PanelTable& panel, const DesignSpec& spec,
                                const std::string& iv_column, const PlaceboDesign& design,
                                int reps, std::uint64_t seed, std::vector<double> levels,
                                unsigned threads) {
  if (reps < 1) fail(ErrorCode::InvalidReps, "placebo replications must be positive");
  if (std::find(spec.exogenous.begin(), spec.exogenous.end(), iv_column) == spec.exogenous.end()) {
    fail(ErrorCode::InvalidConfig, "placebo design must include '" + iv_column + "' as a regressor");
  }
  if (design.row_weights.rows() != Index(panel.rows())) {
    fail(ErrorCode::InvalidArgument, "placebo design does not match the panel");
  }
  PlaceboResult result;
  result.reps = reps;
  result.levels = levels;
  result.coefficients.resize(std::size_t(reps));
  result.p_values.resize(std::size_t(reps));
  parallel_for(std::size_t(reps), threads, [&](std::size_t r) {
    const ShockVector shocks = draw_placebo_shocks(design.keys, seed, r);
    PanelTable work = panel;
    if (work.has_numeric(iv_column)) {
      work.numeric_mut(iv_column) = design.row_weights * shocks.shocks;
    } else {
      work.add_numeric(iv_column, design.row_weights * shocks.shocks);
    }
    const FitResult fit = ols(work, spec);
    result.coefficients[r] = fit.coefficient(iv_column);
    result.p_values[r] = fit.p_value(iv_column);
  });
  for (double level : levels) {
    const auto hits = std::count_if(result.p_values.begin(), result.p_values.end(),
                                    [&](double p) { return p < level; });
    result.rejection_rates.push_back(double(hits) / double(reps));
  }
  return result;
}

std::vector<double> fdr_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::OutOfRangeP, "p-value " + format_number(v) + " outside [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> q(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t i = order[k];
    running = std::min(running, p[i] * (double(m) / double(k + 1)));
    q[i] = running;
  }
  return q;
}

std::vector<BalanceRow> balance_test(const PanelTable& panel,
                                     const std::vector<std::string>& characteristics,
                                     const std::string& iv_column, const DesignSpec& base) {
  std::vector<BalanceRow> rows;
  for (const auto& name : characteristics) {
    DesignSpec spec = base;
    spec.outcome = name;
    spec.endogenous.clear();
    spec.instruments.clear();
    spec.exogenous.insert(spec.exogenous.begin(), iv_column);
    const FitResult fit = ols(panel, spec);
    rows.push_back({name, fit.coefficient(iv_column), fit.std_error(iv_column),
                    fit.p_value(iv_column), 0.0});
  }
  std::vector<double> p;
  for (const auto& r : rows) p.push_back(r.p);
  const auto q = fdr_adjust(p);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].q = q[i];
  return rows;
}

std::string write_balance(const std::vector<BalanceRow>& rows) {
  std::ostringstream out;
  out << "characteristic,coef,se,p,q\n";
  for (const auto& r : rows) {
    out << r.characteristic << ',' << format_number(r.coef) << ',' << format_number(r.se) << ','
        << format_number(r.p) << ',' << format_number(r.q) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

ShiftShareSynth synthesize_shiftshare(const ShiftShareSynthConfig& c) {
  if (c.n_regions < 2 || c.n_products < 1 || c.horizon < 1 || c.n_years < 2 * c.horizon + 1) {
    fail(ErrorCode::InvalidConfig, "shift-share synth needs >= 2 regions and n_years > 2*horizon");
  }
  auto seq = make_seed(c.seed, 0x5eedULL);
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto round_to = [](double v, double q) { return std::round(v / q) * q; };

  ShiftShareSynth out;
  std::vector<std::string> products, regions;
  for (int j = 0; j < c.n_products; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "HS%02d", j + 1);
    products.push_back(buf);
  }
  for (int i = 0; i < c.n_regions; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "A%04d", i);
    regions.push_back(buf);
  }
  for (const auto& p : products) {
    double level = std::exp(10.0 + normal(rng));
    for (int y = 0; y < c.n_years; ++y) {
      out.inputs.imports.add(p, c.first_year + y, round_to(level, 1e-3));
      level *= std::exp(0.3 * normal(rng));
    }
  }
  for (const auto& r : regions) {
    const double pop = std::round(1e5 * (1.0 + unit(rng)));
    for (int y = 0; y < c.n_years; ++y) {
      out.inputs.population[{r, c.first_year + y}] = std::round(pop * (1.0 + 0.01 * y));
      for (const auto& p : products) {
        if (unit(rng) < 0.4) continue;
        out.inputs.trade.add(r, p, c.first_year + y, round_to(std::exp(8.0 + 0.5 * normal(rng)), 1e-3));
      }
    }
  }

  std::vector<std::string> reg_col, year_col, macro_col;
  std::vector<double> iv_col;
  for (int y = c.first_year + c.horizon; y + c.horizon < c.first_year + c.n_years; ++y) {
    const IVSeries iv = build_iv(out.inputs, y, c.horizon);
    std::map<std::string, double> by_region;
    for (const auto& rec : iv) by_region[rec.region] = rec.iv;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      reg_col.push_back(regions[i]);
      year_col.push_back(std::to_string(y));
      macro_col.push_back("M" + std::to_string(int(i) % c.n_macroregions));
      iv_col.push_back(by_region.count(regions[i]) ? by_region[regions[i]] : 0.0);
    }
  }
  const auto n = Index(reg_col.size());
  Vector iv = Eigen::Map<Vector>(iv_col.data(), n);
  Vector outcome(n), weight(n), c1(n), c2(n), c3(n);
  std::vector<double> macro_fe(std::size_t(c.n_macroregions)), year_fe(std::size_t(c.n_years));
  for (double& v : macro_fe) v = normal(rng);
  for (double& v : year_fe) v = normal(rng);
  for (Index i = 0; i < n; ++i) {
    const int m = std::stoi(macro_col[std::size_t(i)].substr(1));
    const int y = std::stoi(year_col[std::size_t(i)]) - c.first_year;
    outcome[i] = round_to(c.effect * iv[i] + macro_fe[std::size_t(m)] + year_fe[std::size_t(y)] +
                              normal(rng),
                          1e-9);
    weight[i] = round_to(1.0 + 9.0 * unit(rng), 1e-3);
    c1[i] = round_to(normal(rng), 1e-9);
    c2[i] = round_to(10.0 + 2.0 * normal(rng), 1e-9);
    c3[i] = round_to(unit(rng), 1e-9);
  }
  PanelTable& panel = out.panel;
  panel = PanelTable(std::size_t(n));
  panel.add_categorical("region", reg_col);
  panel.add_categorical("year", year_col);
  panel.add_categorical("macroregion", macro_col);
  panel.add_numeric("iv", iv);
  panel.add_numeric("outcome", outcome);
  panel.add_numeric("weight", weight);
  panel.add_numeric("char_a", c1);
  panel.add_numeric("char_b", c2);
  panel.add_numeric("char_c", c3);
  panel.set_roles("region", {Role::Cluster});
  panel.set_roles("year", {Role::Fe});
  panel.set_roles("macroregion", {Role::Fe});
  panel.set_roles("iv", {Role::Regressor});
  panel.set_roles("outcome", {Role::Outcome});
  panel.set_roles("weight", {Role::Weight});
  return out;
}

}  // namespace telecouple
