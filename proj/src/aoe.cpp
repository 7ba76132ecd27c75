#include "telecouple/aoe.hpp"

#include "telecouple/error.hpp"
#include "telecouple/parallel.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

namespace telecouple {

void ScoreParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0)) {
    fail(ErrorCode::InvalidConfig, "decay coefficients alpha, beta, gamma must be positive");
  }
  if (!(rad0 > 0.0) || !(rad_inc >= 0.0)) {
    fail(ErrorCode::InvalidConfig, "rad0 must be positive and rad_inc non-negative");
  }
  if (!(max_offaxis > 0.0) || max_offaxis > std::numbers::pi / 2 + 1e-15) {
    fail(ErrorCode::InvalidConfig, "max_offaxis must lie in (0, pi/2]");
  }
  if (n_steps < 1) fail(ErrorCode::InvalidConfig, "n_steps must be at least 1");
  if (!(calm_speed_eps >= 0.0)) fail(ErrorCode::InvalidConfig, "calm_speed_eps must be >= 0");
}

ScoreParams score_params_preset(std::string_view name) {
  ScoreParams p;
  if (name == "default") return p;
  if (name == "appendix") {
    p.max_offaxis = 0.4;
    return p;
  }
  if (name == "main-text") {
    p.alpha = 0.7;
    p.beta = 0.5;
    p.gamma = 0.2;
    return p;
  }
  fail(ErrorCode::InvalidConfig, "unknown parameter preset '" + std::string(name) + "'");
}

std::vector<RawScore> score_step(const StreamlineState& state, const Vector2& wind,
                                 std::span<const Vector2> receivers, const ScoreParams& params,
                                 std::optional<std::size_t> exclude) {
  std::vector<RawScore> out;
  if (!(wind.norm() >= params.calm_speed_eps) || wind.isZero(0.0)) return out;
  for (std::size_t r = 0; r < receivers.size(); ++r) {
    if (exclude && *exclude == r) continue;
    const auto g = step_geometry<double>(state.position, wind, receivers[r]);
    if (g.dist > state.radius || g.angle > params.max_offaxis) continue;
    out.push_back(RawScore{static_cast<std::uint32_t>(state.sender), static_cast<std::uint32_t>(r),
                           state.emit_day, state.step,
                           decay_score(state.radius, g.theta_abs, g.dist, params)});
  }
  return out;
}

std::vector<Vector2> city_positions(const CityRegistry& registry) {
  std::vector<Vector2> out;
  out.reserve(registry.size());
  for (const City& c : registry.cities()) out.emplace_back(c.longitude, c.latitude);
  return out;
}

namespace {

std::vector<RawScore> trace_streamline(std::size_t sender, Vector2 position, DayNumber start_day,
                                       const WindFields& fields,
                                       std::span<const Vector2> receivers,
                                       const ScoreParams& params,
                                       std::optional<std::size_t> exclude,
                                       std::vector<StreamlineState>* trace) {
  std::vector<RawScore> out;
  for (int t = 0; t < params.n_steps; ++t) {
    const auto field = fields.find(start_day + t);
    if (field == fields.end()) break;
    const WindLookup look = sample_at(field->second, position);
    if (!look.inside) break;
    const StreamlineState state{sender, start_day, t, position, params.radius(t)};
    if (trace) trace->push_back(state);
    if (look.wind.norm() < params.calm_speed_eps) continue;  // calm: hold position
    auto scores = score_step(state, look.wind, receivers, params, exclude);
    out.insert(out.end(), scores.begin(), scores.end());
    if (t + 1 < params.n_steps) position = advance_position<double>(position, look.wind);
  }
  return out;
}

bool raw_less(const RawScore& a, const RawScore& b) {
  return std::tie(a.sender, a.receiver, a.emit_day, a.step, a.value) <
         std::tie(b.sender, b.receiver, b.emit_day, b.step, b.value);
}

}  // namespace

std::vector<RawScore> run_streamline(std::size_t sender, DayNumber start_day,
                                     const WindFields& fields, std::span<const Vector2> receivers,
                                     const ScoreParams& params,
                                     std::vector<StreamlineState>* trace) {
  if (sender >= receivers.size()) {
    fail(ErrorCode::UnknownSender, "sender index " + std::to_string(sender) + " out of range");
  }
  return trace_streamline(sender, receivers[sender], start_day, fields, receivers, params, sender,
                          trace);
}

std::vector<RawScore> run_streamline(const std::string& sender_id, DayNumber start_day,
                                     const WindFields& fields, const CityRegistry& registry,
                                     const ScoreParams& params) {
  const auto sender = registry.find(sender_id);
  if (!sender) fail(ErrorCode::UnknownSender, "sender '" + sender_id + "' is not in the registry");
  const auto positions = city_positions(registry);
  return run_streamline(*sender, start_day, fields, positions, params);
}

DailyScoreMatrix aggregate_daily(std::vector<RawScore> raws) {
  std::sort(raws.begin(), raws.end(), raw_less);
  struct Key {
    std::uint32_t s, r;
    DayNumber d;
    bool operator<(const Key& o) const { return std::tie(s, r, d) < std::tie(o.s, o.r, o.d); }
  };
  std::map<Key, double> sums;
  for (const RawScore& raw : raws) sums[{raw.sender, raw.receiver, raw.arrival_day()}] += raw.value;
  DailyScoreMatrix out;
  out.entries.reserve(sums.size());
  for (const auto& [k, v] : sums) out.entries.push_back({k.s, k.r, k.d, v});
  return out;
}

MonthlyScoreMatrix aggregate_monthly(const DailyScoreMatrix& daily, MonthNumber first_month,
                                     MonthNumber last_month) {
  if (last_month < first_month) {
    fail(ErrorCode::InvalidArgument, "empty month period");
  }
  MonthlyScoreMatrix out;
  out.first_month = first_month;
  out.last_month = last_month;
  const auto n_months = static_cast<std::size_t>(last_month - first_month + 1);
  std::vector<double> sums(n_months);
  auto& entries = daily.entries;
  for (std::size_t i = 0; i < entries.size();) {
    const auto s = entries[i].sender;
    const auto r = entries[i].receiver;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (; i < entries.size() && entries[i].sender == s && entries[i].receiver == r; ++i) {
      const MonthNumber m = month_of_day(entries[i].day);
      if (m < first_month || m > last_month) {
        fail(ErrorCode::InvalidArgument, "arrival day " + format_date(entries[i].day) +
                                             " lies outside the period " +
                                             format_month(first_month) + ".." +
                                             format_month(last_month));
      }
      sums[std::size_t(m - first_month)] += entries[i].score;
    }
    for (std::size_t k = 0; k < n_months; ++k) {
      const MonthNumber m = first_month + MonthNumber(k);
      out.entries.push_back({s, r, m, sums[k] / days_in_month(m)});
    }
  }
  return out;
}

WindBins compute_bins(std::vector<double> positive) {
  if (positive.size() < 10) {
    fail(ErrorCode::InsufficientPositiveScores,
         "need at least 10 positive scores for decile bins, have " +
             std::to_string(positive.size()));
  }
  std::sort(positive.begin(), positive.end());
  WindBins bins;
  const double n1 = double(positive.size() - 1);
  for (int k = 1; k <= 9; ++k) {
    const double h = n1 * k / 10.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - double(lo);
    const double hi_value = lo + 1 < positive.size() ? positive[lo + 1] : positive[lo];
    bins.cuts[std::size_t(k - 1)] = positive[lo] + frac * (hi_value - positive[lo]);
  }
  return bins;
}

WindBins compute_bins(const MonthlyScoreMatrix& monthly) {
  std::vector<double> positive;
  for (const auto& e : monthly.entries) {
    if (e.score > 0.0) positive.push_back(e.score);
  }
  return compute_bins(std::move(positive));
}

int assign_bin(double score, const WindBins& bins) {
  if (score < 0.0 || std::isnan(score)) {
    fail(ErrorCode::NegativeScore, "downwind score must be non-negative");
  }
  if (score == 0.0) return kCalmBin;
  for (int k = 0; k < 9; ++k) {
    if (score <= bins.cuts[std::size_t(k)]) return k + 1;
  }
  return 10;
}

std::string bin_label(int bin) {
  static const std::array<const char*, kBinCount> labels{
      "calm", "10th", "9th", "8th", "7th", "6th", "5th", "4th", "3rd", "2nd", "1st"};
  if (bin < 0 || bin >= kBinCount) {
    fail(ErrorCode::MissingBin, "bin index " + std::to_string(bin) + " out of range");
  }
  return labels[std::size_t(bin)];
}

int parse_bin_label(std::string_view label) {
  for (int b = 0; b < kBinCount; ++b) {
    if (bin_label(b) == label) return b;
  }
  fail(ErrorCode::MissingBin, "unknown bin label '" + std::string(label) + "'");
}

AoeResult build_aoe(const CityRegistry& registry, const WindFields& fields,
                    const ScoreParams& params, unsigned threads,
                    std::optional<std::pair<MonthNumber, MonthNumber>> period) {
  params.validate();
  if (fields.empty()) fail(ErrorCode::NoSamplesForDate, "no wind fields");
  const auto positions = city_positions(registry);
  std::vector<DayNumber> days;
  for (const auto& [d, _] : fields) days.push_back(d);

  const std::size_t n_tasks = positions.size() * days.size();
  std::vector<std::vector<RawScore>> parts(n_tasks);
  parallel_for(n_tasks, threads, [&](std::size_t task) {
    const std::size_t sender = task / days.size();
    const DayNumber day = days[task % days.size()];
    parts[task] = run_streamline(sender, day, fields, positions, params);
  });

  AoeResult result;
  for (auto& p : parts) result.raw.insert(result.raw.end(), p.begin(), p.end());
  std::sort(result.raw.begin(), result.raw.end(), raw_less);
  result.daily = aggregate_daily(result.raw);
  const auto [first, last] =
      period.value_or(std::pair{month_of_day(days.front()), month_of_day(days.back())});
  result.monthly = aggregate_monthly(result.daily, first, last);
  std::size_t positive = 0;
  for (const auto& e : result.monthly.entries) positive += e.score > 0.0;
  if (positive >= 10) result.bins = compute_bins(result.monthly);
  return result;
}

Matrix simulate_heatmap(std::size_t sender, DayNumber start_day, const WindFields& fields,
                        const CityRegistry& registry, const ScoreParams& params) {
  if (sender >= registry.size()) {
    fail(ErrorCode::UnknownSender, "sender index " + std::to_string(sender) + " out of range");
  }
  const auto field = fields.find(start_day);
  if (field == fields.end()) {
    fail(ErrorCode::NoSamplesForDate, "no wind field on " + format_date(start_day));
  }
  const GridSpec& spec = field->second.spec;
  std::vector<Vector2> nodes;
  nodes.reserve(spec.node_count());
  for (int row = 0; row < spec.n_lat; ++row) {
    for (int col = 0; col < spec.n_lon; ++col) nodes.emplace_back(spec.node_lon(col), spec.node_lat(row));
  }
  const Vector2 origin(registry[sender].longitude, registry[sender].latitude);
  const auto raws =
      trace_streamline(sender, origin, start_day, fields, nodes, params, std::nullopt, nullptr);
  Matrix out = Matrix::Zero(spec.n_lat, spec.n_lon);
  for (const RawScore& r : raws) out(r.receiver / spec.n_lon, r.receiver % spec.n_lon) += r.value;
  return out;
}

std::string write_monthly_csv(const MonthlyScoreMatrix& monthly, const CityRegistry& registry) {
  std::ostringstream out;
  out << "sender_id,receiver_id,period,score\n";
  for (const auto& e : monthly.entries) {
    out << registry[e.sender].id << ',' << registry[e.receiver].id << ','
        << format_month(e.month) << ',' << format_number(e.score) << '\n';
  }
  return out.str();
}

std::string write_daily_csv(const DailyScoreMatrix& daily, const CityRegistry& registry) {
  std::ostringstream out;
  out << "sender_id,receiver_id,period,score\n";
  for (const auto& e : daily.entries) {
    out << registry[e.sender].id << ',' << registry[e.receiver].id << ',' << format_date(e.day)
        << ',' << format_number(e.score) << '\n';
  }
  return out.str();
}

std::string write_heatmap_csv(const Matrix& scores, const GridSpec& spec) {
  std::ostringstream out;
  out << "row,col,lon,lat,score\n";
  for (int row = 0; row < spec.n_lat; ++row) {
    for (int col = 0; col < spec.n_lon; ++col) {
      out << row << ',' << col << ',' << format_number(spec.node_lon(col)) << ','
          << format_number(spec.node_lat(row)) << ',' << format_number(scores(row, col)) << '\n';
    }
  }
  return out.str();
}

}  // namespace telecouple
