#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cropsits::data {

// Calendar dates as days since 1970-01-01 (proleptic Gregorian). ISO 8601
// strings sort like day numbers, so either form works for ordering; the day
// form exists for window arithmetic on synthetic seasons.

std::int64_t days_from_civil(int year, int month, int day);
void civil_from_days(std::int64_t days, int& year, int& month, int& day);

std::optional<std::int64_t> try_parse_date(std::string_view iso);  // "YYYY-MM-DD"
std::int64_t parse_date(std::string_view iso);                     // FormatError on failure
std::string format_date(std::int64_t days);

}  // namespace cropsits::data
