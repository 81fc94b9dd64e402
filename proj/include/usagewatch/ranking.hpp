#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "usagewatch/date.hpp"
#include "usagewatch/detector.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/robust.hpp"

namespace usagewatch {

struct CountryRank {
  std::string country;
  double score = 0.0;      // MAD of evaluated residuals over the period
  int rank = 0;            // 1-based
  std::size_t days = 0;    // evaluated days contributing to the score
};

struct RankingResult {
  std::vector<CountryRank> ranks;     // top-N, score descending, ties by code
  std::vector<std::string> excluded;  // too few evaluated days in the period
};

// Ranks countries by how widely their residuals spread over [from, to].
// Countries with fewer than min_days evaluated residuals in the period are
// excluded rather than ranked on thin evidence.
inline RankingResult rank_countries(const ResidualSeries& series, Date from, Date to,
                                    std::size_t top, int min_days) {
  if (from > to) throw ParameterError("rank period is empty: from > to");
  if (top == 0) throw ParameterError("top must be positive");
  if (min_days < 1) throw ParameterError("min_days must be at least 1");
  if (series.dates.empty() || to < series.dates.front() || from > series.dates.back()) {
    throw ParameterError("rank period does not overlap the residual series");
  }

  const auto n = series.countries.size();
  const auto m = series.dates.size();
  std::size_t t_begin = 0;
  while (t_begin < m && series.dates[t_begin] < from) ++t_begin;
  std::size_t t_end = m;
  while (t_end > t_begin && series.dates[t_end - 1] > to) --t_end;

  RankingResult result;
  std::vector<CountryRank> scored;
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> residuals;
    for (std::size_t t = t_begin; t < t_end; ++t) {
      const auto& record = series.at(t, c);
      if (record.evaluated) residuals.push_back(record.residual);
    }
    if (residuals.size() < static_cast<std::size_t>(min_days)) {
      result.excluded.push_back(series.countries[c]);
      continue;
    }
    CountryRank entry;
    entry.country = series.countries[c];
    entry.days = residuals.size();
    entry.score = mad(residuals);
    scored.push_back(std::move(entry));
  }

  std::sort(scored.begin(), scored.end(), [](const CountryRank& a, const CountryRank& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.country < b.country;
  });
  if (scored.size() > top) scored.resize(top);
  for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = static_cast<int>(i) + 1;
  result.ranks = std::move(scored);
  return result;
}

}  // namespace usagewatch
