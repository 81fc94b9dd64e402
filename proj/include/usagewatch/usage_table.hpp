#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "usagewatch/csv.hpp"
#include "usagewatch/date.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/util.hpp"

namespace usagewatch {

// Estimated mean concurrent clients per day, keyed by country then day.
// At most one entry per (date, country); values are finite and non-negative.
class UsageTable {
 public:
  using Series = std::map<Date, double>;

  void insert(Date date, const std::string& country, double users) {
    if (country.empty()) throw ParameterError("empty country code");
    if (!std::isfinite(users) || users < 0.0)
      throw ParameterError("user count must be finite and non-negative");
    auto [it, inserted] = by_country_[country].emplace(date, users);
    if (!inserted) {
      throw DuplicateEntryError("duplicate entry for " + date.to_string() + "/" + country);
    }
    ++entries_;
    if (!range_) {
      range_ = {date, date};
    } else {
      range_->first = std::min(range_->first, date);
      range_->second = std::max(range_->second, date);
    }
  }

  bool empty() const { return entries_ == 0; }
  std::size_t size() const { return entries_; }
  std::size_t country_count() const { return by_country_.size(); }

  const std::map<std::string, Series>& by_country() const { return by_country_; }

  // Inclusive [first, last] day over all entries.
  std::pair<Date, Date> date_range() const {
    if (!range_) throw InsufficientDataError("empty usage table has no date range");
    return *range_;
  }

  std::optional<double> lookup(Date date, const std::string& country) const {
    auto c = by_country_.find(country);
    if (c == by_country_.end()) return std::nullopt;
    auto d = c->second.find(date);
    if (d == c->second.end()) return std::nullopt;
    return d->second;
  }

  double max_users(const std::string& country) const {
    auto c = by_country_.find(country);
    if (c == by_country_.end() || c->second.empty())
      throw ParameterError("unknown country: " + country);
    double best = 0.0;
    for (const auto& [date, users] : c->second) best = std::max(best, users);
    return best;
  }

 private:
  std::map<std::string, Series> by_country_;
  std::size_t entries_ = 0;
  std::optional<std::pair<Date, Date>> range_;
};

struct ParseStats {
  std::size_t rows_parsed = 0;
  std::size_t rows_skipped = 0;  // empty/"??"/non-2-letter country codes
};

namespace detail {

inline bool parse_number(std::string_view text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

// Lowercases and validates a two-character code; empty and "??" mean the
// exporter could not geolocate the address.
inline std::optional<std::string> normalize_country(std::string_view raw) {
  std::string code = to_lower(trim(raw));
  if (code.empty() || code == "??") return std::nullopt;
  if (code.size() != 2) return std::nullopt;
  for (char c : code) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'))) return std::nullopt;
  }
  return code;
}

}  // namespace detail

// Reads a per-country daily usage export: '#' comment lines are ignored, the
// first remaining line is a header naming at least date, country and users
// (extra columns are ignored), and each following row is one observation.
inline UsageTable parse_userstats(std::istream& in, ParseStats* stats = nullptr,
                                  char delim = ',') {
  UsageTable table;
  ParseStats local;
  std::string line;
  std::size_t line_no = 0;

  int date_col = -1, country_col = -1, users_col = -1;
  std::size_t min_fields = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line[0] == '#') continue;
    auto fields = split_delimited(line, delim);

    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string name = to_lower(trim(fields[i]));
        if (name == "date") date_col = static_cast<int>(i);
        if (name == "country") country_col = static_cast<int>(i);
        if (name == "users") users_col = static_cast<int>(i);
      }
      if (date_col < 0 || country_col < 0 || users_col < 0) {
        std::string missing;
        if (date_col < 0) missing += " date";
        if (country_col < 0) missing += " country";
        if (users_col < 0) missing += " users";
        throw SchemaError("line " + std::to_string(line_no) +
                          ": header is missing required column(s):" + missing);
      }
      min_fields = static_cast<std::size_t>(std::max({date_col, country_col, users_col})) + 1;
      have_header = true;
      continue;
    }

    if (fields.size() < min_fields) {
      throw ParseError("line " + std::to_string(line_no) + ": expected at least " +
                       std::to_string(min_fields) + " fields, got " +
                       std::to_string(fields.size()));
    }

    const auto date = Date::parse(trim(fields[static_cast<std::size_t>(date_col)]));
    if (!date) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed date '" +
                       fields[static_cast<std::size_t>(date_col)] + "'");
    }

    const auto country =
        detail::normalize_country(fields[static_cast<std::size_t>(country_col)]);
    if (!country) {
      ++local.rows_skipped;
      continue;
    }

    double users = 0.0;
    const std::string users_text = trim(fields[static_cast<std::size_t>(users_col)]);
    if (!detail::parse_number(users_text, users) || !std::isfinite(users)) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed user count '" +
                       users_text + "'");
    }
    if (users < 0.0) {
      throw ParseError("line " + std::to_string(line_no) + ": negative user count '" +
                       users_text + "'");
    }

    try {
      table.insert(*date, *country, users);
    } catch (const DuplicateEntryError& e) {
      throw DuplicateEntryError("line " + std::to_string(line_no) + ": " + e.what());
    }
    ++local.rows_parsed;
  }

  if (!have_header) throw SchemaError("no header line found");
  if (stats) *stats = local;
  return table;
}

inline UsageTable load_userstats(const std::string& path, ParseStats* stats = nullptr,
                                 char delim = ',') {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  return parse_userstats(in, stats, delim);
}

// Rows sorted by (date, country) so equal tables serialize identically.
inline void serialize_userstats(const UsageTable& table, std::ostream& out) {
  out << "date,country,users\n";
  std::map<Date, std::vector<std::pair<std::string, double>>> by_date;
  for (const auto& [country, series] : table.by_country()) {
    for (const auto& [date, users] : series) by_date[date].emplace_back(country, users);
  }
  for (const auto& [date, entries] : by_date) {
    for (const auto& [country, users] : entries) {
      out << date.to_string() << ',' << country << ',' << format_double(users) << '\n';
    }
  }
}

inline std::string serialize_userstats(const UsageTable& table) {
  std::ostringstream out;
  serialize_userstats(table, out);
  return out.str();
}

// Keeps exactly the countries whose usage ever reaches min_users.
inline UsageTable filter_countries(const UsageTable& table, double min_users) {
  if (table.empty()) throw InsufficientDataError("cannot filter an empty usage table");
  if (!(min_users >= 0.0)) throw ParameterError("min_users must be non-negative");
  UsageTable out;
  for (const auto& [country, series] : table.by_country()) {
    double best = 0.0;
    for (const auto& [date, users] : series) best = std::max(best, users);
    if (best < min_users) continue;
    for (const auto& [date, users] : series) out.insert(date, country, users);
  }
  if (out.country_count() < 2) {
    throw InsufficientDataError("fewer than 2 countries reach " + format_double(min_users) +
                                " users; relax --min-users");
  }
  return out;
}

}  // namespace usagewatch
