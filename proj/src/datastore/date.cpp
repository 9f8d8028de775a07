#include "cropsits/datastore/date.hpp"

#include <cstdio>

#include "cropsits/error.hpp"

namespace cropsits::data {

// Howard Hinnant's civil-days algorithms.
std::int64_t days_from_civil(int year, int month, int day) {
  year -= month <= 2;
  const std::int64_t era = (year >= 0 ? year : year - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(year - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(month + (month > 2 ? -3 : 9)) + 2u) / 5u +
      static_cast<unsigned>(day) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t days, int& year, int& month, int& day) {
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  year = static_cast<int>(y + (month <= 2));
}

std::optional<std::int64_t> try_parse_date(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  for (int i : {0, 1, 2, 3}) {
    if (iso[static_cast<std::size_t>(i)] < '0' || iso[static_cast<std::size_t>(i)] > '9')
      return std::nullopt;
    y = y * 10 + (iso[static_cast<std::size_t>(i)] - '0');
  }
  for (int i : {5, 6}) {
    if (iso[static_cast<std::size_t>(i)] < '0' || iso[static_cast<std::size_t>(i)] > '9')
      return std::nullopt;
    m = m * 10 + (iso[static_cast<std::size_t>(i)] - '0');
  }
  for (int i : {8, 9}) {
    if (iso[static_cast<std::size_t>(i)] < '0' || iso[static_cast<std::size_t>(i)] > '9')
      return std::nullopt;
    d = d * 10 + (iso[static_cast<std::size_t>(i)] - '0');
  }
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  // round-trip rejects out-of-range days like February 30th
  std::int64_t days = days_from_civil(y, m, d);
  int ry, rm, rd;
  civil_from_days(days, ry, rm, rd);
  if (ry != y || rm != m || rd != d) return std::nullopt;
  return days;
}

std::int64_t parse_date(std::string_view iso) {
  if (auto days = try_parse_date(iso)) return *days;
  throw FormatError("bad date '" + std::string(iso) + "' (expected YYYY-MM-DD)");
}

std::string format_date(std::int64_t days) {
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

}  // namespace cropsits::data
