#pragma once

#include "telecouple/econometrics.hpp"
#include "telecouple/ingest.hpp"
#include "telecouple/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace telecouple {

using RegionYear = std::pair<std::string, int>;
/// Values keyed by (region, year).
using RegionYearSeries = std::map<RegionYear, double>;

/// Region x product x year export values; keys unique, values >= 0.
class TradeTable {
 public:
  struct Key {
    std::string region;
    std::string product;
    int year;
    auto operator<=>(const Key&) const = default;
  };

  TradeTable() = default;
  /// Throws Error(DuplicateKey) or Error(SchemaError) on negative values.
  void add(const std::string& region, const std::string& product, int year, double value);

  const std::map<Key, double>& flows() const { return flows_; }
  std::vector<std::string> regions() const;
  std::vector<std::string> products() const;
  /// Products exported by `region` in `year`, with their values.
  std::map<std::string, double> exports_of(const std::string& region, int year) const;

 private:
  std::map<Key, double> flows_;
};

/// Product x year world import demand.
class ImportSeries {
 public:
  void add(const std::string& product, int year, double value);
  /// Throws Error(MissingYear).
  double at(const std::string& product, int year) const;
  const std::map<std::pair<std::string, int>, double>& values() const { return values_; }

 private:
  std::map<std::pair<std::string, int>, double> values_;
};

struct ShiftShareInputs {
  TradeTable trade;
  ImportSeries imports;
  RegionYearSeries population;
};

TradeTable load_trade(const std::filesystem::path& path);
ImportSeries load_imports(const std::filesystem::path& path);
/// region_id,year,population
RegionYearSeries load_region_population(const std::filesystem::path& path);
/// region_id,year,<value_column>
RegionYearSeries load_region_series(const std::filesystem::path& path, const std::string& value_column);

std::string write_trade(const TradeTable& trade);
std::string write_imports(const ImportSeries& imports);
std::string write_region_series(const RegionYearSeries& series, const std::string& value_column);

// ---------------------------------------------------------------------------
// Instrument construction

/// Change over the midpoint average, in [-2, 2]. Throws Error(BothZero).
double dh_growth(double start, double end);

/// Product shares of a region's base-year exports; they sum to one.
/// Throws Error(ZeroBaseExports).
std::map<std::string, double> build_shares(const TradeTable& trade, const std::string& region,
                                           int base_year);

/// Rows are regions, columns products; entry = share x (base exports / base
/// population). The instrument is this matrix times the product shifts.
struct ExposureMatrix {
  std::vector<std::string> regions;
  std::vector<std::string> products;
  Matrix weights;
  Vector exposure;  ///< base exports per capita
};

/// Regions without base-year exports get an all-zero row.
/// Throws Error(MissingYear), Error(ZeroPopulation).
ExposureMatrix exposure_matrix(const TradeTable& trade, const RegionYearSeries& population,
                               int base_year, std::span<const std::string> products);

/// DH growth of world imports over [start_year, end_year] per product.
Vector import_shifts(const ImportSeries& imports, std::span<const std::string> products,
                     int start_year, int end_year);

struct IVRecord {
  std::string region;
  int year;
  double iv;
};
using IVSeries = std::vector<IVRecord>;

/// Shares from year - horizon, shifts over [year + shift_start, year + shift_end]
/// (default [year, year + horizon]).
IVSeries build_iv(const ShiftShareInputs& inputs, int year, int horizon = 4,
                  std::optional<std::pair<int, int>> shift_window = std::nullopt);

std::string write_iv(const IVSeries& iv);

/// value(y + h) - value(y), or with a denominator (value(y+h) - value(y)) /
/// denom(y) * 100 in percentage points. Years without a y + h partner are
/// skipped. Throws Error(MissingYear), Error(ZeroDenominator).
RegionYearSeries long_difference(const RegionYearSeries& series, int horizon = 4,
                                 const RegionYearSeries* denominator = nullptr);

// ---------------------------------------------------------------------------
// Diagnostics

struct ShockVector {
  std::vector<std::string> keys;
  Vector shocks;
};

/// Normal(0, variance 5) draws, one per key, from a stream derived from
/// (seed, stream).
ShockVector draw_placebo_shocks(std::span<const std::string> keys, std::uint64_t seed,
                                std::uint64_t stream = 0);

/// Panel rows mapped onto placebo shock keys ("product@year"): row (region,
/// year) weighs the year's shocks by that region's base-period share x exposure.
struct PlaceboDesign {
  std::vector<std::string> keys;
  Matrix row_weights;  ///< panel rows x keys
};

PlaceboDesign placebo_design(const PanelTable& panel, const std::string& region_column,
                             const std::string& year_column, const ShiftShareInputs& inputs,
                             int horizon = 4);

struct PlaceboResult {
  int reps = 0;
  std::vector<double> levels;
  std::vector<double> rejection_rates;
  std::vector<double> coefficients;
  std::vector<double> p_values;
};

/// Rebuilds the instrument column from fresh shocks each replication and
/// re-runs the reduced-form regression `spec` (which must list `iv_column`
/// among its exogenous regressors). Replication r draws from stream r, so
/// results do not depend on scheduling. Throws Error(InvalidReps).
PlaceboResult placebo_rejection(const PanelTable& panel, const DesignSpec& spec,
                                const std::string& iv_column, const PlaceboDesign& design,
                                int reps, std::uint64_t seed,
                                std::vector<double> levels = {0.05, 0.01}, unsigned threads = 1);

/// Benjamini-Hochberg step-up adjusted p-values in input order.
/// Throws Error(OutOfRangeP).
std::vector<double> fdr_adjust(std::span<const double> p_values);

struct BalanceRow {
  std::string characteristic;
  double coef = 0.0;
  double se = 0.0;
  double p = 0.0;
  double q = 0.0;
};

/// One regression of each characteristic on the instrument, with the fixed
/// effects, clustering, weights and controls of `base` (its outcome is ignored).
std::vector<BalanceRow> balance_test(const PanelTable& panel,
                                     const std::vector<std::string>& characteristics,
                                     const std::string& iv_column, const DesignSpec& base);

std::string write_balance(const std::vector<BalanceRow>& rows);

// ---------------------------------------------------------------------------
// Synthetic shift-share inputs

struct ShiftShareSynthConfig {
  int n_regions = 200;
  int n_products = 12;
  int first_year = 1997;
  int n_years = 12;
  int horizon = 4;
  int n_macroregions = 5;
  std::uint64_t seed = 1;
  /// Effect of the instrument on the generated outcome; 0 gives pure noise.
  double effect = 0.0;
};

struct ShiftShareSynth {
  ShiftShareInputs inputs;
  /// region, year, macroregion, iv, outcome, weight and 3 characteristics.
  PanelTable panel;
};

ShiftShareSynth synthesize_shiftshare(const ShiftShareSynthConfig& config);

}  // namespace telecouple
