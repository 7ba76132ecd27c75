#pragma once

#include "telecouple/geo.hpp"
#include "telecouple/ingest.hpp"
#include "telecouple/windfield.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace telecouple {

/// Decay coefficients and streamline schedule. Lengths are in degrees.
struct ScoreParams {
  double alpha = 0.8;
  double beta = 0.49;
  double gamma = 0.23;
  double rad0 = 2.8;
  double rad_inc = 0.2;
  double max_offaxis = 0.4 * std::numbers::pi;
  int n_steps = 7;
  double calm_speed_eps = 1e-6;

  double radius(int step) const { return rad0 + step * rad_inc; }
  /// Throws Error(InvalidConfig) when an invariant is violated.
  void validate() const;
};

/// "default": {0.8, 0.49, 0.23} with a 0.4*pi cutoff.
/// "appendix": {0.8, 0.49, 0.23} with a 0.4 rad cutoff.
/// "main-text": {0.7, 0.5, 0.2} with a 0.4*pi cutoff.
ScoreParams score_params_preset(std::string_view name);

/// exp(-alpha*rad - beta*|theta| - gamma*dist).
template <typename Scalar>
Scalar decay_score(Scalar rad, Scalar theta_abs, Scalar dist, const ScoreParams& params) {
  using std::exp;
  return exp(-Scalar(params.alpha) * rad - Scalar(params.beta) * theta_abs -
             Scalar(params.gamma) * dist);
}

/// Geometry of one receiver relative to the streamline head.
template <typename Scalar>
struct StepGeometry {
  Scalar dist;       ///< great-circle distance p -> r, degrees
  Scalar theta_abs;  ///< |unit normal of w . (r - p)|, degrees
  Scalar angle;      ///< angle between w and (r - p), radians
};

template <typename Scalar>
StepGeometry<Scalar> step_geometry(const LonLat<Scalar>& p, const LonLat<Scalar>& wind,
                                   const LonLat<Scalar>& receiver) {
  using std::abs;
  using std::atan2;
  const LonLat<Scalar> l = receiver - p;
  const Scalar speed = wind.norm();
  const LonLat<Scalar> normal(wind.y() / speed, -wind.x() / speed);
  const Scalar cross = wind.x() * l.y() - wind.y() * l.x();
  const Scalar dot = wind.dot(l);
  StepGeometry<Scalar> g;
  g.dist = great_circle_deg(p, receiver);
  g.theta_abs = abs(normal.dot(l));
  g.angle = (l.x() == Scalar(0) && l.y() == Scalar(0)) ? Scalar(0) : atan2(abs(cross), dot);
  return g;
}

struct StreamlineState {
  std::size_t sender = 0;
  DayNumber emit_day = 0;
  int step = 0;
  Vector2 position = Vector2::Zero();
  double radius = 0.0;
};

struct RawScore {
  std::uint32_t sender = 0;
  std::uint32_t receiver = 0;
  DayNumber emit_day = 0;
  int step = 0;
  double value = 0.0;

  DayNumber arrival_day() const { return emit_day + step; }
};

/// Scores every receiver inside the search disk and angular cutoff. Calm wind
/// (speed below calm_speed_eps) yields nothing. `exclude` skips one receiver
/// index (the sender itself).
std::vector<RawScore> score_step(const StreamlineState& state, const Vector2& wind,
                                 std::span<const Vector2> receivers, const ScoreParams& params,
                                 std::optional<std::size_t> exclude = std::nullopt);

std::vector<Vector2> city_positions(const CityRegistry& registry);

using WindFields = std::map<DayNumber, DailyWindGrid>;

/// Advects one sender for n_steps days starting on `start_day`. Stops early
/// when a day's field is missing or the position leaves the grid. The sender
/// is never scored as its own receiver. When `trace` is given, the state at
/// each scored step is appended.
std::vector<RawScore> run_streamline(std::size_t sender, DayNumber start_day,
                                     const WindFields& fields, std::span<const Vector2> receivers,
                                     const ScoreParams& params,
                                     std::vector<StreamlineState>* trace = nullptr);
/// Throws Error(UnknownSender).
std::vector<RawScore> run_streamline(const std::string& sender_id, DayNumber start_day,
                                     const WindFields& fields, const CityRegistry& registry,
                                     const ScoreParams& params);

// ---------------------------------------------------------------------------
// Aggregation

struct DailyEntry {
  std::uint32_t sender;
  std::uint32_t receiver;
  DayNumber day;
  double score;
};

/// Sparse (sender, receiver, arrival day) scores sorted by key.
struct DailyScoreMatrix {
  std::vector<DailyEntry> entries;
};

struct MonthlyEntry {
  std::uint32_t sender;
  std::uint32_t receiver;
  MonthNumber month;
  double score;
};

/// Sparse (sender, receiver, month) scores sorted by key, with explicit zeros
/// for every month of the period for each pair that is ever scored.
struct MonthlyScoreMatrix {
  MonthNumber first_month = 0;
  MonthNumber last_month = 0;
  std::vector<MonthlyEntry> entries;
};

/// Sums raw scores by arrival day. Raws are sorted by (sender, receiver,
/// emit day, step) before reduction, so input order never matters.
DailyScoreMatrix aggregate_daily(std::vector<RawScore> raws);

/// Calendar-month means of the daily scores; days without an entry count as
/// zero. Throws Error(InvalidArgument) if an arrival day falls outside the period.
MonthlyScoreMatrix aggregate_monthly(const DailyScoreMatrix& daily, MonthNumber first_month,
                                     MonthNumber last_month);

// ---------------------------------------------------------------------------
// Decile bins

inline constexpr int kCalmBin = 0;
inline constexpr int kBinCount = 11;

/// Nine interior decile cuts over pooled positive monthly scores.
struct WindBins {
  std::array<double, 9> cuts{};
};

/// Linear-interpolation (type 7) deciles. Throws
/// Error(InsufficientPositiveScores) with fewer than 10 positive entries.
WindBins compute_bins(const MonthlyScoreMatrix& monthly);
WindBins compute_bins(std::vector<double> positive_scores);

/// 0 is calm; 1..10 run from the weakest decile ("10th") to the strongest
/// ("1st"). A score equal to a cut falls in the lower bin.
int assign_bin(double score, const WindBins& bins);
std::string bin_label(int bin);
/// Throws Error(MissingBin) on an unknown label.
int parse_bin_label(std::string_view label);

// ---------------------------------------------------------------------------
// Engine

struct AoeResult {
  std::vector<RawScore> raw;  ///< sorted by (sender, receiver, emit day, step)
  DailyScoreMatrix daily;
  MonthlyScoreMatrix monthly;
  std::optional<WindBins> bins;
};

/// Runs every (sender, start day) streamline in parallel and aggregates.
/// The period defaults to the months spanned by the wind fields. Results do
/// not depend on the thread count.
AoeResult build_aoe(const CityRegistry& registry, const WindFields& fields,
                    const ScoreParams& params, unsigned threads = 1,
                    std::optional<std::pair<MonthNumber, MonthNumber>> period = std::nullopt);

/// Scores every grid node as a virtual receiver of one streamline and sums
/// over steps. Returns an n_lat x n_lon matrix.
Matrix simulate_heatmap(std::size_t sender, DayNumber start_day, const WindFields& fields,
                        const CityRegistry& registry, const ScoreParams& params);

std::string write_monthly_csv(const MonthlyScoreMatrix& monthly, const CityRegistry& registry);
std::string write_daily_csv(const DailyScoreMatrix& daily, const CityRegistry& registry);
std::string write_heatmap_csv(const Matrix& scores, const GridSpec& spec);

}  // namespace telecouple
