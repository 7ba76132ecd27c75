#pragma once

#include "telecouple/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace telecouple {

// ---------------------------------------------------------------------------
// City registry

struct City {
  std::string id;
  double longitude = 0.0;
  double latitude = 0.0;
  std::map<int, double> population_by_year;
};

/// Validated, immutable list of cities. Ids are unique, coordinates are in
/// range and every city carries a population for each registry year.
class CityRegistry {
 public:
  CityRegistry() = default;
  /// Validates and takes ownership. `years` lists the population columns in
  /// output order; every city must have exactly those years.
  CityRegistry(std::vector<City> cities, std::vector<int> years);

  std::size_t size() const { return cities_.size(); }
  const City& operator[](std::size_t i) const { return cities_[i]; }
  const std::vector<City>& cities() const { return cities_; }
  const std::vector<int>& years() const { return years_; }

  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws Error(MissingPopulation) when the year is absent.
  double population(std::size_t city, int year) const;

 private:
  std::vector<City> cities_;
  std::vector<int> years_;
  std::unordered_map<std::string, std::size_t> index_;
};

CityRegistry load_city_registry(const std::filesystem::path& path);
std::string write_city_registry(const CityRegistry& registry);

// ---------------------------------------------------------------------------
// Daily wind samples

struct WindSample {
  std::string location_id;
  double longitude = 0.0;
  double latitude = 0.0;
  DayNumber day = 0;
  double u = 0.0;  ///< eastward, m/s
  double v = 0.0;  ///< northward, m/s
};

/// One record per (location, day). Records keep their input order; lookups
/// by day go through an index.
class WindSampleTable {
 public:
  WindSampleTable() = default;
  explicit WindSampleTable(std::vector<WindSample> records);

  const std::vector<WindSample>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  /// Distinct days in increasing order.
  std::vector<DayNumber> days() const;
  /// Indices of records on `day`, in input order.
  const std::vector<std::size_t>& on_day(DayNumber day) const;

 private:
  std::vector<WindSample> records_;
  std::map<DayNumber, std::vector<std::size_t>> by_day_;
};

/// Location ids are either registry city ids or grid points written as
/// `pt:<lon>:<lat>`.
WindSampleTable load_wind_samples(const std::filesystem::path& path, const CityRegistry& registry);
std::string write_wind_samples(const WindSampleTable& table);

// ---------------------------------------------------------------------------
// Panels

enum class Role { Outcome, Regressor, Instrument, Fe, Cluster, Weight };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

/// Integer-coded categorical column. Codes index `levels`, which are kept in
/// order of first appearance.
struct Categorical {
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t size() const { return codes.size(); }
  int n_levels() const { return static_cast<int>(levels.size()); }

  static Categorical from_labels(const std::vector<std::string>& labels);
  /// Cartesian product of several categoricals (e.g. sender x receiver x month).
  static Categorical interact(const std::vector<const Categorical*>& parts);
};

/// Typed panel with named numeric and categorical columns and optional role
/// bindings. A column may be registered in both forms (e.g. year as FE and
/// as a numeric trend).
class PanelTable {
 public:
  PanelTable() = default;
  explicit PanelTable(std::size_t rows) : rows_(rows) {}

  std::size_t rows() const { return rows_; }

  void add_numeric(const std::string& name, Vector values);
  void add_categorical(const std::string& name, Categorical values);
  void add_categorical(const std::string& name, const std::vector<std::string>& labels);
  void set_roles(const std::string& name, std::vector<Role> roles);

  bool has_numeric(const std::string& name) const { return numeric_.count(name) > 0; }
  bool has_categorical(const std::string& name) const { return categorical_.count(name) > 0; }
  /// Throws Error(SchemaError) naming the column when it is not present.
  const Vector& numeric(const std::string& name) const;
  Vector& numeric_mut(const std::string& name);
  const Categorical& categorical(const std::string& name) const;

  const std::vector<std::string>& column_order() const { return order_; }
  const std::map<std::string, std::vector<Role>>& roles() const { return roles_; }

  /// Rows where keep[i] is true, preserving order.
  PanelTable filter(const std::vector<bool>& keep) const;

 private:
  void note_column(const std::string& name, std::size_t size);

  std::size_t rows_ = 0;
  std::vector<std::string> order_;
  std::map<std::string, Vector> numeric_;
  std::map<std::string, Categorical> categorical_;
  std::map<std::string, std::vector<Role>> roles_;
};

/// Column name -> roles. Columns absent from the declaration are loaded
/// untyped: numeric when every cell parses, categorical otherwise.
using RoleDeclaration = std::map<std::string, std::vector<Role>>;

/// Reads `{"roles": {"col": "fe" | ["fe", "cluster"], ...}}`.
RoleDeclaration parse_role_declaration(const nlohmann::json& sidecar);
RoleDeclaration load_role_declaration(const std::filesystem::path& path);

PanelTable load_panel(const std::filesystem::path& path, const RoleDeclaration& roles);
std::string write_panel(const PanelTable& panel);

// ---------------------------------------------------------------------------
// Synthetic inputs

enum class WindRegime { Constant, Rotating, RandomSmooth };

struct SynthConfig {
  int n_cities = 10;
  int n_days = 30;
  DayNumber start_day = day_from_ymd(2001, 1, 1);
  WindRegime wind_regime = WindRegime::RandomSmooth;
  double wind_u = 5.0;  ///< constant regime u, and speed scale for the others
  double wind_v = 0.0;
  std::uint64_t seed = 1;
  double lon_min = -74.0, lon_max = -34.0, lat_min = -34.0, lat_max = 5.0;
  int first_year = 2001;
  int n_years = 1;
  // Panel DGP: y = beta*x + region FE + year FE + e, x = first_stage*z + v.
  int panel_regions = 50;
  int panel_years = 6;
  double beta = -0.5;
  double first_stage = 1.0;
  double endogeneity = 0.5;
  double noise_sd = 1.0;
};

struct SynthOutput {
  CityRegistry registry;
  WindSampleTable wind;
  PanelTable panel;
};

WindRegime parse_wind_regime(std::string_view text);
/// Deterministic for a fixed config. Throws Error(InvalidConfig).
SynthOutput generate_synthetic(const SynthConfig& config);

}  // namespace telecouple
