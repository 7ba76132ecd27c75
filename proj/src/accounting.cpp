#include "telecouple/accounting.hpp"

#include "telecouple/error.hpp"
#include "telecouple/io.hpp"
#include "telecouple/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace telecouple {

// ---------------------------------------------------------------------------
// ExactSum: Shewchuk partials, final rounding as in Python's math.fsum.

void ExactSum::add(double x) {
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::abs(x) < std::abs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
}

void ExactSum::add(const ExactSum& other) {
  for (double p : other.partials_) add(p);
}

double ExactSum::value() const {
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round half-even across the remaining partials.
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

// ---------------------------------------------------------------------------

StandardizeScope parse_scope(std::string_view text) {
  if (text == "pooled") return StandardizeScope::Pooled;
  if (text == "per-sender") return StandardizeScope::PerSender;
  fail(ErrorCode::InvalidConfig, "unknown standardization scope '" + std::string(text) + "'");
}

std::string_view to_string(StandardizeScope scope) {
  return scope == StandardizeScope::Pooled ? "pooled" : "per-sender";
}

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const std::vector<double>& x, const std::string& what) {
  if (x.empty()) fail(ErrorCode::ZeroVariance, "no forest observations for " + what);
  ExactSum s;
  for (double v : x) s.add(v);
  const double mean = s.value() / double(x.size());
  ExactSum ss;
  for (double v : x) ss.add((v - mean) * (v - mean));
  const double sd = std::sqrt(ss.value() / double(x.size()));
  if (!(sd > 0.0)) fail(ErrorCode::ZeroVariance, "forest cover has zero variance for " + what);
  return {mean, sd};
}

std::map<std::string, Moments> scope_moments(const RegionYearSeries& forest,
                                             StandardizeScope scope) {
  std::map<std::string, Moments> out;
  if (scope == StandardizeScope::Pooled) {
    std::vector<double> all;
    for (const auto& [_, v] : forest) all.push_back(v);
    const Moments m = moments(all, "the pooled panel");
    for (const auto& [key, _] : forest) out[key.first] = m;
    return out;
  }
  std::map<std::string, std::vector<double>> by_sender;
  for (const auto& [key, v] : forest) by_sender[key.first].push_back(v);
  for (const auto& [sender, values] : by_sender) out[sender] = moments(values, "sender '" + sender + "'");
  return out;
}

}  // namespace

RegionYearSeries standardize_loss(const RegionYearSeries& forest, StandardizeScope scope) {
  const auto m = scope_moments(forest, scope);
  RegionYearSeries out;
  for (const auto& [key, v] : forest) {
    const Moments& s = m.at(key.first);
    out[key] = -(v - s.mean) / s.sd;
  }
  return out;
}

double forest_sd(const RegionYearSeries& forest, StandardizeScope scope, const std::string& sender) {
  const auto m = scope_moments(forest, scope);
  const auto it = m.find(sender);
  if (it == m.end()) fail(ErrorCode::MissingYear, "no forest series for sender '" + sender + "'");
  return it->second.sd;
}

double trade_deforestation(double delta_trade, double beta_trade, double land_ha) {
  if (!(land_ha > 0.0)) fail(ErrorCode::InvalidArgument, "land area must be positive");
  if (beta_trade > 0.0) {
    warn("positive trade coefficient " + format_number(beta_trade) + "; deforestation set to 0");
    return 0.0;
  }
  return std::abs(beta_trade) / 100.0 * delta_trade * land_ha;
}

// ---------------------------------------------------------------------------

void validate_coefficients(const CoefficientTable& coefs) {
  if (coefs.empty()) fail(ErrorCode::SchemaError, "coefficient table is empty");
  if (!coefs.count("calm")) fail(ErrorCode::SchemaError, "coefficient table lacks the calm bin");
  for (const auto& [label, value] : coefs) {
    try {
      parse_bin_label(label);
    } catch (const Error&) {
      fail(ErrorCode::SchemaError, "unknown bin label '" + label + "' in coefficient table");
    }
    if (!std::isfinite(value)) fail(ErrorCode::NonFiniteValue, "coefficient for '" + label + "' is not finite");
  }
}

CoefficientTable load_coefficients(const std::filesystem::path& path, const std::string& reference) {
  const CsvTable csv = read_csv(path);
  if (csv.header.size() < 2 || csv.header[0] != "bin" || csv.header[1] != "coef") {
    fail(ErrorCode::SchemaError, path.string() + ": header must start with bin,coef");
  }
  CoefficientTable coefs;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto where = path.string() + ":" + std::to_string(csv.line_numbers[r]);
    const auto v = parse_double(row[1]);
    if (!v) fail(ErrorCode::MissingValue, where + ": missing coefficient");
    if (!coefs.emplace(row[0], *v).second) fail(ErrorCode::DuplicateKey, where + ": duplicate bin");
  }
  if (coefs.empty()) fail(ErrorCode::SchemaError, path.string() + ": coefficient table is empty");
  if (!reference.empty()) coefs.emplace(reference, 0.0);
  validate_coefficients(coefs);
  return coefs;
}

std::vector<BinAssignment> assign_bins(const MonthlyScoreMatrix& monthly, const WindBins& bins,
                                       const CityRegistry& registry) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::map<MonthNumber, double>> scored;
  for (const auto& e : monthly.entries) scored[{e.sender, e.receiver}][e.month] = e.score;
  std::vector<BinAssignment> out;
  const std::size_t n = registry.size();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < n; ++r) {
      if (s == r) continue;
      const auto it = scored.find({std::uint32_t(s), std::uint32_t(r)});
      for (MonthNumber m = monthly.first_month; m <= monthly.last_month; ++m) {
        double score = 0.0;
        if (it != scored.end()) {
          const auto jt = it->second.find(m);
          if (jt != it->second.end()) score = jt->second;
        }
        out.push_back({registry.cities()[s].id, registry.cities()[r].id, m,
                       bin_label(assign_bin(score, bins))});
      }
    }
  }
  return out;
}

std::vector<BinAssignment> load_bin_assignments(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  if (csv.header != std::vector<std::string>{"sender_id", "receiver_id", "period", "bin"}) {
    fail(ErrorCode::SchemaError, path.string() + ": header must be sender_id,receiver_id,period,bin");
  }
  std::vector<BinAssignment> out;
  for (const auto& row : csv.rows) {
    if (row[3].empty()) fail(ErrorCode::MissingBin, path.string() + ": empty bin cell");
    parse_bin_label(row[3]);
    out.push_back({row[0], row[1], parse_month(row[2]), row[3]});
  }
  return out;
}

std::string write_bin_assignments(const std::vector<BinAssignment>& assignments) {
  std::ostringstream out;
  out << "sender_id,receiver_id,period,bin\n";
  for (const auto& a : assignments) {
    out << a.sender << ',' << a.receiver << ',' << format_month(a.month) << ',' << a.bin << '\n';
  }
  return out.str();
}

RegionYearSeries registry_population(const CityRegistry& registry) {
  RegionYearSeries out;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    for (int y : registry.years()) out[{registry.cities()[i].id, y}] = registry.population(i, y);
  }
  return out;
}

// ---------------------------------------------------------------------------

void VslParams::validate() const {
  if (!(base_vsl > 0.0) || !(income_ratio > 0.0) || !(transfer_elasticity >= 0.0) ||
      !std::isfinite(base_vsl) || !std::isfinite(income_ratio) ||
      !std::isfinite(transfer_elasticity)) {
    fail(ErrorCode::InvalidConfig, "VSL parameters must be positive and finite");
  }
  if (override_vsl && !(*override_vsl > 0.0 && std::isfinite(*override_vsl))) {
    fail(ErrorCode::InvalidConfig, "override VSL must be positive");
  }
}

VslParams vsl_from_json(const nlohmann::json& j) {
  VslParams p;
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "vsl settings must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "base_vsl") {
      p.base_vsl = value.get<double>();
    } else if (key == "transfer_elasticity") {
      p.transfer_elasticity = value.get<double>();
    } else if (key == "income_ratio") {
      p.income_ratio = value.get<double>();
    } else if (key == "override_vsl") {
      p.override_vsl = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
    } else {
      fail(ErrorCode::InvalidConfig, "unknown vsl setting '" + key + "'");
    }
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const VslParams& p) {
  return {{"base_vsl", p.base_vsl},
          {"transfer_elasticity", p.transfer_elasticity},
          {"income_ratio", p.income_ratio},
          {"override_vsl", p.override_vsl ? nlohmann::json(*p.override_vsl) : nlohmann::json()}};
}

double vsl_value(const VslParams& params) {
  params.validate();
  if (params.override_vsl) return *params.override_vsl;
  const double v = params.base_vsl * std::pow(params.income_ratio, -params.transfer_elasticity);
  if (params.transfer_elasticity != 0.0) {
    warn("income-transfer VSL " + format_number(v) + " differs from the 0.7M default");
  }
  return v;
}

double monetize(double deaths, double vsl) {
  if (!(vsl >= 0.0)) fail(ErrorCode::InvalidArgument, "VSL must be non-negative");
  return deaths * vsl;
}

double damage_ratio(double loss, double export_total) {
  if (!(export_total > 0.0)) fail(ErrorCode::ZeroExports, "export total must be positive");
  return loss / export_total;
}

// ---------------------------------------------------------------------------

double cell_deaths(double coef, double z_loss, double population) {
  return coef * z_loss * population / 100000.0;
}

namespace {

struct CellSource {
  const LedgerInputs& in;

  double coef(const BinAssignment& a) const {
    const auto it = in.coefs.find(a.bin);
    if (it == in.coefs.end()) {
      fail(ErrorCode::MissingBin, "no coefficient for bin '" + a.bin + "' (" + a.sender + " -> " +
                                      a.receiver + ", " + format_month(a.month) + ")");
    }
    return it->second;
  }
  double z(const BinAssignment& a) const {
    const int y = year_of_month(a.month);
    const auto it = in.z_loss.find({a.sender, y});
    if (it == in.z_loss.end()) {
      fail(ErrorCode::MissingYear,
           "no forest loss for sender '" + a.sender + "' in " + std::to_string(y));
    }
    return it->second;
  }
  double pop(const BinAssignment& a) const {
    const int y = year_of_month(a.month);
    const auto it = in.population.find({a.receiver, y});
    if (it == in.population.end()) {
      fail(ErrorCode::MissingPopulation,
           "no population for receiver '" + a.receiver + "' in " + std::to_string(y));
    }
    return it->second;
  }
  double deaths(const BinAssignment& a) const {
    if (a.bin.empty()) {
      fail(ErrorCode::MissingBin, "missing bin for " + a.sender + " -> " + a.receiver);
    }
    const double d = cell_deaths(coef(a), z(a), pop(a));
    if (!std::isfinite(d)) fail(ErrorCode::NonFiniteValue, "non-finite death contribution");
    return d;
  }
};

double sum_for(const RegionYearSeries& series, const std::string& sender) {
  ExactSum s;
  for (auto it = series.lower_bound({sender, std::numeric_limits<int>::min()});
       it != series.end() && it->first.first == sender; ++it) {
    s.add(it->second);
  }
  return s.value();
}

}  // namespace

double excess_deaths(const std::string& sender, const LedgerInputs& inputs) {
  validate_coefficients(inputs.coefs);
  const CellSource src{inputs};
  ExactSum total;
  for (const auto& a : inputs.assignments) {
    if (a.sender == sender) total.add(src.deaths(a));
  }
  return total.value();
}

DamageLedger build_ledger(const LedgerInputs& inputs) {
  validate_coefficients(inputs.coefs);
  const CellSource src{inputs};

  // Completeness: every pair covers the same set of months, once each.
  std::set<MonthNumber> months;
  std::map<std::pair<std::string, std::string>, std::set<MonthNumber>> pair_months;
  for (const auto& a : inputs.assignments) {
    months.insert(a.month);
    if (!pair_months[{a.sender, a.receiver}].insert(a.month).second) {
      fail(ErrorCode::DuplicateKey, "duplicate bin assignment " + a.sender + " -> " + a.receiver +
                                        ", " + format_month(a.month));
    }
  }
  for (const auto& [pair, ms] : pair_months) {
    if (ms.size() != months.size()) {
      for (MonthNumber m : months) {
        if (!ms.count(m)) {
          fail(ErrorCode::MissingBin, "no bin for " + pair.first + " -> " + pair.second + " in " +
                                          format_month(m));
        }
      }
    }
  }

  std::map<std::string, std::pair<ExactSum, ExactSum>> by_sender;  // net, gross positive
  std::map<std::string, std::pair<ExactSum, ExactSum>> by_receiver;
  for (const auto& a : inputs.assignments) {
    const double d = src.deaths(a);
    auto& s = by_sender[a.sender];
    auto& r = by_receiver[a.receiver];
    s.first.add(d);
    r.first.add(d);
    if (d > 0.0) {
      s.second.add(d);
      r.second.add(d);
    }
  }

  DamageLedger ledger;
  ledger.cells = inputs.assignments.size();
  ledger.vsl = vsl_value(inputs.vsl);
  ExactSum sender_total, receiver_total, gross;
  for (const auto& [id, sums] : by_sender) {
    SenderLedgerRow row;
    row.sender = id;
    row.trade_shock = sum_for(inputs.trade_shock, id);
    row.deforestation = sum_for(inputs.deforestation, id);
    row.excess_deaths = sums.first.value();
    row.gross_positive = sums.second.value();
    row.monetized_loss = monetize(row.excess_deaths, ledger.vsl);
    ledger.senders.push_back(row);
    sender_total.add(sums.first);
    gross.add(sums.second);
  }
  for (const auto& [id, sums] : by_receiver) {
    ledger.receivers.push_back({id, sums.first.value(), sums.second.value()});
    receiver_total.add(sums.first);
  }
  ledger.total_deaths_by_sender = sender_total.value();
  ledger.total_deaths_by_receiver = receiver_total.value();
  ledger.gross_positive_deaths = gross.value();
  ledger.total_loss = monetize(ledger.total_deaths_by_sender, ledger.vsl);
  if (inputs.export_total) {
    ledger.export_total = inputs.export_total;
    ledger.damage_ratio = damage_ratio(ledger.total_loss, *inputs.export_total);
  }
  return ledger;
}

std::string write_ledger_csv(const DamageLedger& ledger) {
  std::ostringstream out;
  out << "sender_id,trade_shock,deforestation_ha,excess_deaths,gross_positive_deaths,monetized_loss\n";
  for (const auto& r : ledger.senders) {
    out << r.sender << ',' << format_number(r.trade_shock) << ',' << format_number(r.deforestation)
        << ',' << format_number(r.excess_deaths) << ',' << format_number(r.gross_positive) << ','
        << format_number(r.monetized_loss) << '\n';
  }
  return out.str();
}

std::string write_received_csv(const DamageLedger& ledger) {
  std::ostringstream out;
  out << "receiver_id,received_deaths,gross_positive_deaths\n";
  for (const auto& r : ledger.receivers) {
    out << r.receiver << ',' << format_number(r.received_deaths) << ','
        << format_number(r.gross_positive) << '\n';
  }
  return out.str();
}

nlohmann::json ledger_summary(const DamageLedger& ledger) {
  nlohmann::json j = {{"cells", ledger.cells},
                      {"senders", ledger.senders.size()},
                      {"receivers", ledger.receivers.size()},
                      {"total_deaths", ledger.total_deaths_by_sender},
                      {"total_deaths_by_receiver", ledger.total_deaths_by_receiver},
                      {"gross_positive_deaths", ledger.gross_positive_deaths},
                      {"vsl", ledger.vsl},
                      {"total_loss", ledger.total_loss}};
  j["export_total"] = ledger.export_total ? nlohmann::json(*ledger.export_total) : nlohmann::json();
  j["damage_ratio"] = ledger.damage_ratio ? nlohmann::json(*ledger.damage_ratio) : nlohmann::json();
  return j;
}

}  // namespace telecouple
