#pragma once

#include "telecouple/aoe.hpp"
#include "telecouple/shiftshare.hpp"
#include "telecouple/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace telecouple {

/// Floating-point sum without intermediate rounding: the partials form a
/// non-overlapping expansion and value() rounds the exact total once. Two
/// accumulators fed the same addends in any grouping give the same value().
class ExactSum {
 public:
  void add(double x);
  void add(const ExactSum& other);
  double value() const;

 private:
  std::vector<double> partials_;
};

// ---------------------------------------------------------------------------
// Forest standardization

enum class StandardizeScope { Pooled, PerSender };
StandardizeScope parse_scope(std::string_view text);
std::string_view to_string(StandardizeScope scope);

/// z = -(forest - mean) / sd (population sd) over the pooled panel or within
/// each sender. Throws Error(ZeroVariance).
RegionYearSeries standardize_loss(const RegionYearSeries& forest,
                                  StandardizeScope scope = StandardizeScope::Pooled);

/// Population sd of forest cover in the scope that applies to `sender`.
/// Hectares divided by this value are in the z-units used in estimation.
double forest_sd(const RegionYearSeries& forest, StandardizeScope scope,
                 const std::string& sender);

/// |beta| / 100 * delta_trade * land for beta < 0. beta > 0 gives 0 with a
/// warning. Throws Error(InvalidArgument) when land <= 0.
double trade_deforestation(double delta_trade, double beta_trade, double land_ha);

// ---------------------------------------------------------------------------
// Mortality coefficients and bin assignments

/// Bin label -> deaths per 100,000 per 1 SD forest loss per month.
using CoefficientTable = std::map<std::string, double>;

/// Throws Error(SchemaError) when empty, when the calm entry is missing, or
/// on an unknown label; Error(NonFiniteValue) on non-finite entries.
void validate_coefficients(const CoefficientTable& coefs);

/// Reads bin,coef[,...] (the per-bin CSV from a downwind fit). A missing
/// `reference` entry is added as 0.
CoefficientTable load_coefficients(const std::filesystem::path& path,
                                   const std::string& reference = "10th");

struct BinAssignment {
  std::string sender;
  std::string receiver;
  MonthNumber month;
  std::string bin;
};

/// Every ordered pair of distinct cities for every month of the period;
/// pairs that are never scored are calm.
std::vector<BinAssignment> assign_bins(const MonthlyScoreMatrix& monthly, const WindBins& bins,
                                       const CityRegistry& registry);

/// sender_id,receiver_id,period,bin
std::vector<BinAssignment> load_bin_assignments(const std::filesystem::path& path);
std::string write_bin_assignments(const std::vector<BinAssignment>& assignments);

/// (receiver, year) population from the registry.
RegionYearSeries registry_population(const CityRegistry& registry);

// ---------------------------------------------------------------------------
// Valuation

struct VslParams {
  double base_vsl = 2.3e6;
  double transfer_elasticity = 1.2;
  double income_ratio = 7.0;
  std::optional<double> override_vsl = 0.7e6;

  /// Throws Error(InvalidConfig).
  void validate() const;
};

VslParams vsl_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VslParams& params);

/// override_vsl when set, otherwise base * ratio^-elasticity (with a warning,
/// since that path does not give the 0.7M default).
double vsl_value(const VslParams& params);
double monetize(double deaths, double vsl);
/// Throws Error(ZeroExports).
double damage_ratio(double loss, double export_total);

// ---------------------------------------------------------------------------
// Ledger

struct SenderLedgerRow {
  std::string sender;
  double trade_shock = 0.0;     ///< per capita, summed over years
  double deforestation = 0.0;   ///< hectares, summed over years
  double excess_deaths = 0.0;   ///< net
  double gross_positive = 0.0;  ///< positive contributions only
  double monetized_loss = 0.0;
};

struct ReceiverLedgerRow {
  std::string receiver;
  double received_deaths = 0.0;
  double gross_positive = 0.0;
};

struct DamageLedger {
  std::vector<SenderLedgerRow> senders;      ///< sorted by id
  std::vector<ReceiverLedgerRow> receivers;  ///< sorted by id
  std::size_t cells = 0;
  double total_deaths_by_sender = 0.0;
  double total_deaths_by_receiver = 0.0;
  double gross_positive_deaths = 0.0;
  double vsl = 0.0;
  double total_loss = 0.0;
  std::optional<double> export_total;
  std::optional<double> damage_ratio;
};

struct LedgerInputs {
  std::vector<BinAssignment> assignments;
  RegionYearSeries z_loss;      ///< (sender, year)
  CoefficientTable coefs;
  RegionYearSeries population;  ///< (receiver, year)
  VslParams vsl;
  /// Optional per-sender context echoed into the ledger.
  RegionYearSeries trade_shock;
  RegionYearSeries deforestation;
  std::optional<double> export_total;
};

/// Deaths for one cell: coef(bin) * z_loss * pop / 100,000.
double cell_deaths(double coef, double z_loss, double population);

/// Sum over receivers and months of one sender's cells.
/// Throws Error(MissingBin), Error(MissingPopulation), Error(MissingYear).
double excess_deaths(const std::string& sender, const LedgerInputs& inputs);

/// Throws as excess_deaths, plus Error(MissingBin) when a pair lacks a month
/// that another pair has.
DamageLedger build_ledger(const LedgerInputs& inputs);

std::string write_ledger_csv(const DamageLedger& ledger);
std::string write_received_csv(const DamageLedger& ledger);
nlohmann::json ledger_summary(const DamageLedger& ledger);

}  // namespace telecouple
