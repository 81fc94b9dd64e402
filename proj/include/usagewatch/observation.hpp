#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "usagewatch/date.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/usage_table.hpp"

namespace usagewatch {

// Dense m x n observation grid: one row per consecutive calendar day, one
// column per country, no missing cells.
struct ObservationMatrix {
  Eigen::MatrixXd values;
  std::vector<Date> dates;
  std::vector<std::string> countries;

  Eigen::Index day_count() const { return values.rows(); }
  Eigen::Index country_count() const { return values.cols(); }

  std::optional<Eigen::Index> column_of(const std::string& country) const {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(countries.size()); ++i) {
      if (countries[static_cast<std::size_t>(i)] == country) return i;
    }
    return std::nullopt;
  }

  std::optional<Eigen::Index> row_of(Date date) const {
    if (dates.empty() || date < dates.front() || date > dates.back()) return std::nullopt;
    return date - dates.front();
  }
};

struct AssemblyReport {
  struct Dropped {
    std::string country;
    std::int64_t longest_gap = 0;
  };
  std::vector<Dropped> dropped;     // countries removed for gaps beyond the limit
  std::size_t filled_cells = 0;     // interpolated or edge-extended cells
};

// Builds the dense grid over the table's full date range. Missing runs of at
// most max_gap days are filled: interior gaps by linear interpolation between
// the neighbouring observations, leading/trailing gaps by the nearest
// observed value. A country with any longer run is dropped and reported.
inline ObservationMatrix assemble_matrix(const UsageTable& table, std::int64_t max_gap,
                                         AssemblyReport* report = nullptr) {
  if (table.empty()) throw InsufficientDataError("cannot assemble an empty usage table");
  if (max_gap < 0) throw ParameterError("max_gap must be non-negative");

  const auto [first, last] = table.date_range();
  const auto m = last - first + 1;
  AssemblyReport local;

  struct Column {
    std::string country;
    std::vector<double> values;
  };
  std::vector<Column> columns;

  for (const auto& [country, series] : table.by_country()) {
    std::vector<double> col(static_cast<std::size_t>(m),
                            std::numeric_limits<double>::quiet_NaN());
    for (const auto& [date, users] : series) {
      col[static_cast<std::size_t>(date - first)] = users;
    }

    // Locate runs of missing days and fill or bail out.
    std::int64_t longest_gap = 0;
    bool dropped = false;
    std::size_t filled = 0;
    std::size_t i = 0;
    const std::size_t n_days = col.size();
    while (i < n_days) {
      if (!std::isnan(col[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n_days && std::isnan(col[j])) ++j;
      const auto gap = static_cast<std::int64_t>(j - i);
      longest_gap = std::max(longest_gap, gap);
      if (gap > max_gap) {
        dropped = true;
        break;
      }
      const bool has_left = i > 0;
      const bool has_right = j < n_days;
      for (std::size_t k = i; k < j; ++k) {
        if (has_left && has_right) {
          const double left = col[i - 1];
          const double right = col[j];
          const double t = static_cast<double>(k - (i - 1)) / static_cast<double>(j - (i - 1));
          col[k] = left + (right - left) * t;
        } else if (has_left) {
          col[k] = col[i - 1];
        } else {
          col[k] = col[j];
        }
        ++filled;
      }
      i = j;
    }

    if (dropped) {
      local.dropped.push_back({country, longest_gap});
    } else {
      local.filled_cells += filled;
      columns.push_back({country, std::move(col)});
    }
  }

  if (columns.empty()) {
    throw InsufficientDataError("every country was dropped while assembling the matrix");
  }

  ObservationMatrix out;
  out.dates.reserve(static_cast<std::size_t>(m));
  for (std::int64_t d = 0; d < m; ++d) out.dates.push_back(first + d);
  out.countries.reserve(columns.size());
  out.values.resize(m, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.countries.push_back(columns[c].country);
    for (std::int64_t d = 0; d < m; ++d) {
      out.values(d, static_cast<Eigen::Index>(c)) = columns[c].values[static_cast<std::size_t>(d)];
    }
  }
  if (report) *report = local;
  return out;
}

}  // namespace usagewatch
