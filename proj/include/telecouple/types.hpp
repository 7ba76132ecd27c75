#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace telecouple {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::VectorXi;
using Vector2 = Eigen::Vector2d;

/// Calendar day as a count of days since 1970-01-01.
using DayNumber = std::int32_t;

/// Calendar month as year*12 + (month-1).
using MonthNumber = std::int32_t;

DayNumber day_from_ymd(int year, unsigned month, unsigned day);
std::chrono::year_month_day ymd_from_day(DayNumber day);

/// Parses YYYY-MM-DD; throws Error(SchemaError) on malformed input.
DayNumber parse_date(std::string_view text);
std::string format_date(DayNumber day);

MonthNumber month_of_day(DayNumber day);
MonthNumber make_month(int year, unsigned month);
/// Parses YYYY-MM.
MonthNumber parse_month(std::string_view text);
std::string format_month(MonthNumber month);
int year_of_month(MonthNumber month);
unsigned month_of_year(MonthNumber month);
int days_in_month(MonthNumber month);
DayNumber first_day_of_month(MonthNumber month);

/// printf("%.12g"); the canonical numeric output format.
std::string format_number(double value);

}  // namespace telecouple
