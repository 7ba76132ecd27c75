#include "telecouple/ingest.hpp"

#include "telecouple/error.hpp"
#include "telecouple/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace telecouple {

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

double require_number(const std::string& cell, const std::filesystem::path& path, std::size_t line,
                      const std::string& column) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
    fail(ErrorCode::MissingValue, where(path, line) + ": missing value in column '" + column + "'");
  }
  const auto value = parse_double(cell);
  if (!value) {
    fail(ErrorCode::SchemaError,
         where(path, line) + ": '" + cell + "' is not a number in column '" + column + "'");
  }
  return *value;
}

double round_to(double value, double quantum) { return std::round(value / quantum) * quantum; }

}  // namespace

// ---------------------------------------------------------------------------
// CityRegistry

CityRegistry::CityRegistry(std::vector<City> cities, std::vector<int> years)
    : cities_(std::move(cities)), years_(std::move(years)) {
  for (std::size_t i = 0; i < cities_.size(); ++i) {
    const City& c = cities_[i];
    if (!index_.emplace(c.id, i).second) {
      fail(ErrorCode::DuplicateId, "city_id '" + c.id + "' appears more than once");
    }
    if (!(c.longitude >= -180.0 && c.longitude <= 180.0) ||
        !(c.latitude >= -90.0 && c.latitude <= 90.0)) {
      fail(ErrorCode::CoordinateOutOfRange, "city '" + c.id + "' at (" +
                                                format_number(c.longitude) + ", " +
                                                format_number(c.latitude) + ")");
    }
    for (int y : years_) {
      const auto it = c.population_by_year.find(y);
      if (it == c.population_by_year.end()) {
        fail(ErrorCode::MissingPopulation,
             "city '" + c.id + "' has no population for " + std::to_string(y));
      }
      if (!(it->second >= 0.0) || !std::isfinite(it->second)) {
        fail(ErrorCode::SchemaError, "city '" + c.id + "' has invalid population");
      }
    }
  }
}

std::optional<std::size_t> CityRegistry::find(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double CityRegistry::population(std::size_t city, int year) const {
  const auto& pops = cities_.at(city).population_by_year;
  const auto it = pops.find(year);
  if (it == pops.end()) {
    fail(ErrorCode::MissingPopulation,
         "city '" + cities_[city].id + "' has no population for " + std::to_string(year));
  }
  return it->second;
}

CityRegistry load_city_registry(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  if (csv.header.size() < 3 || csv.header[0] != "city_id" || csv.header[1] != "longitude" ||
      csv.header[2] != "latitude") {
    fail(ErrorCode::SchemaError,
         path.string() + ": header must start with city_id,longitude,latitude");
  }
  std::vector<int> years;
  for (std::size_t c = 3; c < csv.header.size(); ++c) {
    const std::string& name = csv.header[c];
    int year = 0;
    if (name.size() != 8 || name.rfind("pop_", 0) != 0 ||
        std::sscanf(name.c_str() + 4, "%4d", &year) != 1) {
      fail(ErrorCode::SchemaError, path.string() + ": unexpected column '" + name + "'");
    }
    years.push_back(year);
  }
  std::vector<City> cities;
  cities.reserve(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::size_t line = csv.line_numbers[r];
    City city;
    city.id = row[0];
    if (city.id.empty()) {
      fail(ErrorCode::MissingValue, where(path, line) + ": empty city_id");
    }
    city.longitude = require_number(row[1], path, line, "longitude");
    city.latitude = require_number(row[2], path, line, "latitude");
    for (std::size_t c = 3; c < row.size(); ++c) {
      const double pop = require_number(row[c], path, line, csv.header[c]);
      if (pop < 0.0) {
        fail(ErrorCode::SchemaError, where(path, line) + ": negative population");
      }
      city.population_by_year[years[c - 3]] = pop;
    }
    cities.push_back(std::move(city));
  }
  return CityRegistry(std::move(cities), std::move(years));
}

std::string write_city_registry(const CityRegistry& registry) {
  std::ostringstream out;
  out << "city_id,longitude,latitude";
  for (int y : registry.years()) out << ",pop_" << y;
  out << '\n';
  for (const City& c : registry.cities()) {
    out << c.id << ',' << format_number(c.longitude) << ',' << format_number(c.latitude);
    for (int y : registry.years()) out << ',' << format_number(c.population_by_year.at(y));
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// WindSampleTable

WindSampleTable::WindSampleTable(std::vector<WindSample> records) : records_(std::move(records)) {
  std::set<std::pair<DayNumber, std::string>> seen;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const WindSample& s = records_[i];
    if (!std::isfinite(s.u) || !std::isfinite(s.v)) {
      fail(ErrorCode::NonFiniteValue,
           "wind at '" + s.location_id + "' on " + format_date(s.day) + " is not finite");
    }
    if (!seen.emplace(s.day, s.location_id).second) {
      fail(ErrorCode::DuplicateKey,
           "duplicate wind record for '" + s.location_id + "' on " + format_date(s.day));
    }
    by_day_[s.day].push_back(i);
  }
}

std::vector<DayNumber> WindSampleTable::days() const {
  std::vector<DayNumber> out;
  out.reserve(by_day_.size());
  for (const auto& [day, _] : by_day_) out.push_back(day);
  return out;
}

const std::vector<std::size_t>& WindSampleTable::on_day(DayNumber day) const {
  static const std::vector<std::size_t> kEmpty;
  const auto it = by_day_.find(day);
  return it == by_day_.end() ? kEmpty : it->second;
}

WindSampleTable load_wind_samples(const std::filesystem::path& path,
                                  const CityRegistry& registry) {
  const CsvTable csv = read_csv(path);
  const std::vector<std::string> expected{"location_id", "date", "u_ms", "v_ms"};
  if (csv.header != expected) {
    fail(ErrorCode::SchemaError, path.string() + ": header must be location_id,date,u_ms,v_ms");
  }
  std::vector<WindSample> records;
  records.reserve(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::size_t line = csv.line_numbers[r];
    WindSample s;
    s.location_id = row[0];
    if (const auto city = registry.find(s.location_id)) {
      s.longitude = registry[*city].longitude;
      s.latitude = registry[*city].latitude;
    } else if (s.location_id.rfind("pt:", 0) == 0) {
      const std::string rest = s.location_id.substr(3);
      const auto colon = rest.find(':');
      const auto lon = colon == std::string::npos ? std::nullopt : parse_double(rest.substr(0, colon));
      const auto lat = colon == std::string::npos ? std::nullopt : parse_double(rest.substr(colon + 1));
      if (!lon || !lat || !(std::abs(*lon) <= 180.0) || !(std::abs(*lat) <= 90.0)) {
        fail(ErrorCode::UnknownLocation, where(path, line) + ": invalid grid coordinate '" +
                                             s.location_id + "'");
      }
      s.longitude = *lon;
      s.latitude = *lat;
    } else {
      fail(ErrorCode::UnknownLocation,
           where(path, line) + ": location '" + s.location_id + "' is not in the registry");
    }
    s.day = parse_date(row[1]);
    const auto u = parse_double(row[2]);
    const auto v = parse_double(row[3]);
    if (!u || !v) {
      fail(ErrorCode::NonFiniteValue, where(path, line) + ": wind component is not a number");
    }
    s.u = *u;
    s.v = *v;
    if (!std::isfinite(s.u) || !std::isfinite(s.v)) {
      fail(ErrorCode::NonFiniteValue, where(path, line) + ": wind component is not finite");
    }
    records.push_back(std::move(s));
  }
  return WindSampleTable(std::move(records));
}

std::string write_wind_samples(const WindSampleTable& table) {
  std::ostringstream out;
  out << "location_id,date,u_ms,v_ms\n";
  for (const WindSample& s : table.records()) {
    out << s.location_id << ',' << format_date(s.day) << ',' << format_number(s.u) << ','
        << format_number(s.v) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Panels

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Outcome: return "outcome";
    case Role::Regressor: return "regressor";
    case Role::Instrument: return "instrument";
    case Role::Fe: return "fe";
    case Role::Cluster: return "cluster";
    case Role::Weight: return "weight";
  }
  return "";
}

Role parse_role(std::string_view text) {
  for (Role r : {Role::Outcome, Role::Regressor, Role::Instrument, Role::Fe, Role::Cluster,
                 Role::Weight}) {
    if (to_string(r) == text) return r;
  }
  fail(ErrorCode::SchemaError, "unknown column role '" + std::string(text) + "'");
}

Categorical Categorical::from_labels(const std::vector<std::string>& labels) {
  Categorical out;
  out.codes.reserve(labels.size());
  std::unordered_map<std::string, int> index;
  for (const auto& label : labels) {
    const auto [it, inserted] = index.emplace(label, static_cast<int>(out.levels.size()));
    if (inserted) out.levels.push_back(label);
    out.codes.push_back(it->second);
  }
  return out;
}

Categorical Categorical::interact(const std::vector<const Categorical*>& parts) {
  Categorical out;
  if (parts.empty()) return out;
  const std::size_t n = parts.front()->size();
  std::map<std::vector<int>, int> index;
  std::vector<int> key(parts.size());
  out.codes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < parts.size(); ++p) key[p] = parts[p]->codes[i];
    const auto [it, inserted] = index.emplace(key, static_cast<int>(out.levels.size()));
    if (inserted) {
      std::string label;
      for (std::size_t p = 0; p < parts.size(); ++p) {
        if (p) label += '|';
        label += parts[p]->levels[key[p]];
      }
      out.levels.push_back(std::move(label));
    }
    out.codes.push_back(it->second);
  }
  return out;
}

void PanelTable::note_column(const std::string& name, std::size_t size) {
  if (order_.empty() && numeric_.empty() && categorical_.empty() && rows_ == 0) rows_ = size;
  if (size != rows_) {
    fail(ErrorCode::SchemaError, "column '" + name + "' has " + std::to_string(size) +
                                     " rows, panel has " + std::to_string(rows_));
  }
  if (std::find(order_.begin(), order_.end(), name) == order_.end()) order_.push_back(name);
}

void PanelTable::add_numeric(const std::string& name, Vector values) {
  note_column(name, static_cast<std::size_t>(values.size()));
  numeric_[name] = std::move(values);
}

void PanelTable::add_categorical(const std::string& name, Categorical values) {
  note_column(name, values.size());
  categorical_[name] = std::move(values);
}

void PanelTable::add_categorical(const std::string& name, const std::vector<std::string>& labels) {
  add_categorical(name, Categorical::from_labels(labels));
}

void PanelTable::set_roles(const std::string& name, std::vector<Role> roles) {
  if (!has_numeric(name) && !has_categorical(name)) {
    fail(ErrorCode::SchemaError, "cannot assign roles to undeclared column '" + name + "'");
  }
  roles_[name] = std::move(roles);
}

const Vector& PanelTable::numeric(const std::string& name) const {
  const auto it = numeric_.find(name);
  if (it == numeric_.end()) {
    fail(ErrorCode::SchemaError, "panel has no numeric column '" + name + "'");
  }
  return it->second;
}

Vector& PanelTable::numeric_mut(const std::string& name) {
  const auto it = numeric_.find(name);
  if (it == numeric_.end()) {
    fail(ErrorCode::SchemaError, "panel has no numeric column '" + name + "'");
  }
  return it->second;
}

const Categorical& PanelTable::categorical(const std::string& name) const {
  const auto it = categorical_.find(name);
  if (it == categorical_.end()) {
    fail(ErrorCode::SchemaError, "panel has no categorical column '" + name + "'");
  }
  return it->second;
}

PanelTable PanelTable::filter(const std::vector<bool>& keep) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) rows.push_back(static_cast<Index>(i));
  }
  PanelTable out(rows.size());
  for (const auto& name : order_) {
    if (const auto it = numeric_.find(name); it != numeric_.end()) {
      out.add_numeric(name, it->second(rows));
    }
    if (const auto it = categorical_.find(name); it != categorical_.end()) {
      std::vector<std::string> labels;
      labels.reserve(rows.size());
      for (Index r : rows) labels.push_back(it->second.levels[it->second.codes[r]]);
      out.add_categorical(name, labels);
    }
  }
  out.roles_ = roles_;
  return out;
}

RoleDeclaration parse_role_declaration(const nlohmann::json& sidecar) {
  if (!sidecar.is_object() || !sidecar.contains("roles") || !sidecar["roles"].is_object()) {
    fail(ErrorCode::SchemaError, "role sidecar must be an object with a 'roles' object");
  }
  RoleDeclaration out;
  for (const auto& [column, value] : sidecar["roles"].items()) {
    std::vector<Role> roles;
    if (value.is_string()) {
      roles.push_back(parse_role(value.get<std::string>()));
    } else if (value.is_array()) {
      for (const auto& r : value) {
        if (!r.is_string()) fail(ErrorCode::SchemaError, "role of '" + column + "' is not a string");
        roles.push_back(parse_role(r.get<std::string>()));
      }
    } else {
      fail(ErrorCode::SchemaError, "role of '" + column + "' must be a string or array");
    }
    out[column] = std::move(roles);
  }
  return out;
}

RoleDeclaration load_role_declaration(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  return parse_role_declaration(sidecar);
}

PanelTable load_panel(const std::filesystem::path& path, const RoleDeclaration& roles) {
  const CsvTable csv = read_csv(path);
  for (const auto& [column, _] : roles) {
    if (!csv.column(column)) {
      fail(ErrorCode::SchemaError, path.string() + ": declared column '" + column + "' is absent");
    }
  }
  PanelTable panel(csv.rows.size());
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    const std::string& name = csv.header[c];
    const auto declared = roles.find(name);
    bool categorical = false;
    bool numeric = false;
    if (declared != roles.end()) {
      for (Role r : declared->second) {
        if (r == Role::Fe || r == Role::Cluster) categorical = true;
        else numeric = true;
      }
    } else {
      numeric = std::all_of(csv.rows.begin(), csv.rows.end(),
                            [&](const auto& row) { return parse_double(row[c]).has_value(); });
      categorical = !numeric;
    }
    std::vector<std::string> labels;
    Vector values(static_cast<Index>(csv.rows.size()));
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const std::string& cell = csv.rows[r][c];
      const std::size_t line = csv.line_numbers[r];
      if (declared != roles.end() && (cell.empty() || cell == "NA")) {
        fail(ErrorCode::MissingValue,
             where(path, line) + ": missing value in role column '" + name + "'");
      }
      if (categorical) labels.push_back(cell);
      if (numeric) {
        const double value = declared != roles.end() ? require_number(cell, path, line, name)
                                                     : *parse_double(cell);
        if (declared != roles.end() && !std::isfinite(value)) {
          fail(ErrorCode::MissingValue,
               where(path, line) + ": non-finite value in role column '" + name + "'");
        }
        values[static_cast<Index>(r)] = value;
      }
    }
    if (numeric) panel.add_numeric(name, std::move(values));
    if (categorical) panel.add_categorical(name, labels);
    if (declared != roles.end()) {
      for (Role r : declared->second) {
        if (r == Role::Weight && (panel.numeric(name).array() < 0.0).any()) {
          fail(ErrorCode::NegativeWeight, path.string() + ": weight column '" + name +
                                              "' contains negative values");
        }
      }
      panel.set_roles(name, declared->second);
    }
  }
  return panel;
}

std::string write_panel(const PanelTable& panel) {
  std::ostringstream out;
  const auto& columns = panel.column_order();
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ',';
      if (panel.has_categorical(columns[c])) {
        const Categorical& cat = panel.categorical(columns[c]);
        out << cat.levels[cat.codes[r]];
      } else {
        out << format_number(panel.numeric(columns[c])[static_cast<Index>(r)]);
      }
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic inputs

WindRegime parse_wind_regime(std::string_view text) {
  if (text == "constant") return WindRegime::Constant;
  if (text == "rotating") return WindRegime::Rotating;
  if (text == "random-smooth") return WindRegime::RandomSmooth;
  fail(ErrorCode::InvalidConfig, "unknown wind regime '" + std::string(text) + "'");
}

SynthOutput generate_synthetic(const SynthConfig& config) {
  if (config.n_cities < 2) {
    fail(ErrorCode::InvalidConfig, "n_cities must be at least 2");
  }
  if (config.n_days < 1 || config.n_years < 1 || config.panel_regions < 2 ||
      config.panel_years < 2) {
    fail(ErrorCode::InvalidConfig, "n_days, n_years must be >= 1; panel needs >= 2 regions and years");
  }
  if (!(config.lon_min < config.lon_max) || !(config.lat_min < config.lat_max)) {
    fail(ErrorCode::InvalidConfig, "empty bounding box");
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<int> years;
  for (int y = 0; y < config.n_years; ++y) years.push_back(config.first_year + y);

  std::vector<City> cities;
  for (int i = 0; i < config.n_cities; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "C%03d", i);
    City c;
    c.id = id;
    c.longitude = round_to(config.lon_min + unit(rng) * (config.lon_max - config.lon_min), 1e-4);
    c.latitude = round_to(config.lat_min + unit(rng) * (config.lat_max - config.lat_min), 1e-4);
    for (int y : years) c.population_by_year[y] = std::round(5e4 + unit(rng) * 1.95e6);
    cities.push_back(std::move(c));
  }

  const double lon_mid = 0.5 * (config.lon_min + config.lon_max);
  const double lat_mid = 0.5 * (config.lat_min + config.lat_max);
  const double lon_half = 0.5 * (config.lon_max - config.lon_min);
  const double lat_half = 0.5 * (config.lat_max - config.lat_min);
  const double speed = std::hypot(config.wind_u, config.wind_v);

  std::vector<WindSample> wind;
  wind.reserve(static_cast<std::size_t>(config.n_days) * cities.size());
  for (int d = 0; d < config.n_days; ++d) {
    // Affine field coefficients for this day: u = s*(a0 + a1*x + a2*y).
    std::array<double, 6> coef{};
    if (config.wind_regime == WindRegime::RandomSmooth) {
      for (double& a : coef) a = 2.0 * unit(rng) - 1.0;
    }
    const double heading = 2.0 * std::numbers::pi * d / 12.0;
    for (const City& c : cities) {
      WindSample s;
      s.location_id = c.id;
      s.longitude = c.longitude;
      s.latitude = c.latitude;
      s.day = config.start_day + d;
      switch (config.wind_regime) {
        case WindRegime::Constant:
          s.u = config.wind_u;
          s.v = config.wind_v;
          break;
        case WindRegime::Rotating:
          s.u = round_to(speed * std::cos(heading), 1e-6);
          s.v = round_to(speed * std::sin(heading), 1e-6);
          break;
        case WindRegime::RandomSmooth: {
          const double x = (c.longitude - lon_mid) / lon_half;
          const double y = (c.latitude - lat_mid) / lat_half;
          s.u = round_to(speed * (coef[0] + coef[1] * x + coef[2] * y), 1e-6);
          s.v = round_to(speed * (coef[3] + coef[4] * x + coef[5] * y), 1e-6);
          break;
        }
      }
      wind.push_back(std::move(s));
    }
  }

  // Region x year panel for the IV estimator.
  const int R = config.panel_regions;
  const int T = config.panel_years;
  std::vector<double> region_fe(R), year_fe(T);
  for (double& a : region_fe) a = normal(rng);
  for (double& b : year_fe) b = normal(rng);
  const Index n = static_cast<Index>(R) * T;
  std::vector<std::string> region(n), year(n), macro(n);
  Vector z(n), x(n), y(n), w(n);
  for (int r = 0; r < R; ++r) {
    for (int t = 0; t < T; ++t) {
      const Index i = static_cast<Index>(r) * T + t;
      char buf[16];
      std::snprintf(buf, sizeof buf, "R%03d", r);
      region[i] = buf;
      year[i] = std::to_string(config.first_year + t);
      macro[i] = "M" + std::to_string(r % 5);
      const double common = normal(rng);
      z[i] = round_to(normal(rng), 1e-9);
      x[i] = round_to(config.first_stage * z[i] + common + 0.5 * normal(rng), 1e-9);
      y[i] = round_to(config.beta * x[i] + region_fe[r] + year_fe[t] + config.endogeneity * common +
                          config.noise_sd * normal(rng),
                      1e-9);
      w[i] = round_to(1.0 + 9.0 * unit(rng), 1e-3);
    }
  }
  PanelTable panel(static_cast<std::size_t>(n));
  panel.add_categorical("region", region);
  panel.add_categorical("year", year);
  panel.add_categorical("macroregion", macro);
  panel.add_numeric("z", z);
  panel.add_numeric("x", x);
  panel.add_numeric("y", y);
  panel.add_numeric("w", w);
  panel.set_roles("region", {Role::Fe, Role::Cluster});
  panel.set_roles("year", {Role::Fe});
  panel.set_roles("z", {Role::Instrument});
  panel.set_roles("x", {Role::Regressor});
  panel.set_roles("y", {Role::Outcome});
  panel.set_roles("w", {Role::Weight});

  return SynthOutput{CityRegistry(std::move(cities), std::move(years)),
                     WindSampleTable(std::move(wind)), std::move(panel)};
}

}  // namespace telecouple
