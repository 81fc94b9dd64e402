#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace usagewatch {

namespace detail {

// Gregorian <-> day-count conversions (proleptic, epoch 1970-01-01).
inline constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

inline constexpr Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {y + (m <= 2), m, d};
}

inline constexpr bool is_leap(std::int64_t y) {
  return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0);
}

inline constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
  constexpr unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return lengths[m - 1];
}

}  // namespace detail

// A calendar day, stored as days since 1970-01-01. No time zone semantics.
class Date {
 public:
  Date() = default;
  constexpr explicit Date(std::int64_t days) : days_(days) {}

  static std::optional<Date> from_ymd(std::int64_t year, unsigned month, unsigned day) {
    if (month < 1 || month > 12) return std::nullopt;
    if (day < 1 || day > detail::days_in_month(year, month)) return std::nullopt;
    return Date(detail::days_from_civil(year, month, day));
  }

  // Strict "YYYY-MM-DD" (four-digit year). Rejects impossible dates.
  static std::optional<Date> parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto number = [](std::string_view s, int& out) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      return ec == std::errc() && ptr == s.data() + s.size();
    };
    int y = 0, m = 0, d = 0;
    if (!number(text.substr(0, 4), y) || !number(text.substr(5, 2), m) ||
        !number(text.substr(8, 2), d))
      return std::nullopt;
    if (m < 1 || d < 1) return std::nullopt;
    return from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
  }

  std::int64_t days_since_epoch() const { return days_; }

  std::string to_string() const {
    const auto c = detail::civil_from_days(days_);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", static_cast<long long>(c.year), c.month,
                  c.day);
    return buf;
  }

  Date& operator+=(std::int64_t n) {
    days_ += n;
    return *this;
  }
  friend Date operator+(Date a, std::int64_t n) { return Date(a.days_ + n); }
  friend Date operator-(Date a, std::int64_t n) { return Date(a.days_ - n); }
  friend std::int64_t operator-(Date a, Date b) { return a.days_ - b.days_; }
  friend auto operator<=>(Date, Date) = default;

 private:
  std::int64_t days_ = 0;
};

}  // namespace usagewatch
