#include "telecouple/types.hpp"

#include "telecouple/error.hpp"

#include <charconv>
#include <cstdio>

namespace telecouple {

namespace {

int parse_int(std::string_view text, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::SchemaError, "malformed date '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::UnknownLocation: return "UnknownLocation";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateExtent: return "DegenerateExtent";
    case ErrorCode::NoSamplesForDate: return "NoSamplesForDate";
    case ErrorCode::UnknownSender: return "UnknownSender";
    case ErrorCode::InsufficientPositiveScores: return "InsufficientPositiveScores";
    case ErrorCode::NegativeScore: return "NegativeScore";
    case ErrorCode::BothZero: return "BothZero";
    case ErrorCode::ZeroBaseExports: return "ZeroBaseExports";
    case ErrorCode::MissingYear: return "MissingYear";
    case ErrorCode::ZeroPopulation: return "ZeroPopulation";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::InvalidReps: return "InvalidReps";
    case ErrorCode::OutOfRangeP: return "OutOfRangeP";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::EmptyPanel: return "EmptyPanel";
    case ErrorCode::WeakRank: return "WeakRank";
    case ErrorCode::SingleCluster: return "SingleCluster";
    case ErrorCode::MissingBin: return "MissingBin";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::MissingPopulation: return "MissingPopulation";
    case ErrorCode::ZeroExports: return "ZeroExports";
  }
  return "Unknown";
}

DayNumber day_from_ymd(int year, unsigned month, unsigned day) {
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                  std::chrono::day{day}};
  if (!ymd.ok()) {
    fail(ErrorCode::SchemaError, "invalid calendar date");
  }
  return static_cast<DayNumber>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::chrono::year_month_day ymd_from_day(DayNumber day) {
  return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{day}}};
}

DayNumber parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    fail(ErrorCode::SchemaError, "malformed date '" + std::string(text) + "'");
  }
  const int y = parse_int(text.substr(0, 4), text);
  const int m = parse_int(text.substr(5, 2), text);
  const int d = parse_int(text.substr(8, 2), text);
  if (m < 1 || m > 12 || d < 1 || d > 31) {
    fail(ErrorCode::SchemaError, "malformed date '" + std::string(text) + "'");
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                  std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) {
    fail(ErrorCode::SchemaError, "invalid calendar date '" + std::string(text) + "'");
  }
  return static_cast<DayNumber>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::string format_date(DayNumber day) {
  const auto ymd = ymd_from_day(day);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()));
  return buf;
}

MonthNumber make_month(int year, unsigned month) {
  return static_cast<MonthNumber>(year * 12 + int(month) - 1);
}

MonthNumber month_of_day(DayNumber day) {
  const auto ymd = ymd_from_day(day);
  return make_month(int(ymd.year()), unsigned(ymd.month()));
}

MonthNumber parse_month(std::string_view text) {
  if (text.size() != 7 || text[4] != '-') {
    fail(ErrorCode::SchemaError, "malformed month '" + std::string(text) + "'");
  }
  const int y = parse_int(text.substr(0, 4), text);
  const int m = parse_int(text.substr(5, 2), text);
  if (m < 1 || m > 12) {
    fail(ErrorCode::SchemaError, "malformed month '" + std::string(text) + "'");
  }
  return make_month(y, unsigned(m));
}

int year_of_month(MonthNumber month) {
  return month >= 0 ? month / 12 : -((-month + 11) / 12);
}

unsigned month_of_year(MonthNumber month) {
  return unsigned(month - year_of_month(month) * 12 + 1);
}

std::string format_month(MonthNumber month) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", year_of_month(month), month_of_year(month));
  return buf;
}

DayNumber first_day_of_month(MonthNumber month) {
  return day_from_ymd(year_of_month(month), month_of_year(month), 1);
}

int days_in_month(MonthNumber month) {
  return first_day_of_month(month + 1) - first_day_of_month(month);
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

}  // namespace telecouple
