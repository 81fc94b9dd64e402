#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <deque>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "usagewatch/date.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/observation.hpp"
#include "usagewatch/pca.hpp"
#include "usagewatch/robust.hpp"
#include "usagewatch/util.hpp"

namespace usagewatch {

struct DetectorParams {
  int window = 180;                                  // rolling fit window, days
  ComponentPolicy components = ComponentPolicy::fixed(12);
  double mad_k = 2.5;                                // band half-width in MADs
  double mad_consistency = kNormalMadConsistency;    // MAD -> sigma for the band
  double mad_floor = 1e-6;                           // dispersion floor, zero-MAD histories
  double scale_floor = 1.0;                          // usage-level floor, dormant countries
  int min_history = 30;                              // residuals required before flagging

  void validate() const {
    if (window <= 0) throw ParameterError("window must be positive");
    if (!(mad_k > 0.0)) throw ParameterError("mad_k must be positive");
    if (!(mad_consistency > 0.0)) throw ParameterError("mad_consistency must be positive");
    if (!(mad_floor > 0.0)) throw ParameterError("mad_floor must be positive");
    if (!(scale_floor > 0.0)) throw ParameterError("scale_floor must be positive");
    if (min_history < 1) throw ParameterError("min_history must be at least 1");
  }
};

// One (day, country) cell. residual > 0 means usage came in below the model's
// prediction (a drop); < 0 means above it. Unevaluated cells keep NaNs.
struct ResidualRecord {
  double usage = std::numeric_limits<double>::quiet_NaN();
  double predicted = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  bool evaluated = false;
};

struct ResidualSeries {
  std::vector<Date> dates;             // one per matrix row
  std::vector<std::string> countries;  // one per matrix column
  std::vector<ResidualRecord> records; // row-major day x country

  const ResidualRecord& at(std::size_t day, std::size_t country) const {
    return records[day * countries.size() + country];
  }
  ResidualRecord& at(std::size_t day, std::size_t country) {
    return records[day * countries.size() + country];
  }
};

enum class AnomalyClass { kDrop, kIncrease };

inline const char* to_string(AnomalyClass c) {
  return c == AnomalyClass::kDrop ? "drop" : "increase";
}

struct AnomalyFlag {
  Date date;
  std::string country;
  AnomalyClass anomaly_class = AnomalyClass::kDrop;
  double residual = 0.0;
  double threshold_low = 0.0;
  double threshold_high = 0.0;
};

// Rolling per-country residual statistics; mad is the raw (unscaled) median
// absolute deviation about the rolling median, recomputed on every update.
struct ThresholdState {
  std::deque<double> history;
  double rolling_median = 0.0;
  double mad = 0.0;
};

// De-standardizes a residual and expresses it as a fraction of the country's
// typical usage over the window. Sign is preserved: positive = usage below
// prediction.
inline double proportional_residual(double raw_std_residual, double scale,
                                    double rolling_usage_level, double scale_floor) {
  if (!(scale > 0.0)) throw ParameterError("proportional_residual: scale must be positive");
  return (raw_std_residual * scale) / std::max(rolling_usage_level, scale_floor);
}

inline void update_threshold(ThresholdState& state, double residual, int window) {
  if (!std::isfinite(residual))
    throw ParameterError("update_threshold: residual must be finite");
  state.history.push_back(residual);
  while (state.history.size() > static_cast<std::size_t>(window)) state.history.pop_front();
  std::vector<double> values(state.history.begin(), state.history.end());
  state.rolling_median = median(values);
  state.mad = mad(values, state.rolling_median);
}

// Dynamic band around the rolling median. Width is mad_k 'sigma-equivalent'
// MADs (mad * mad_consistency), floored so all-constant histories do not flag
// every infinitesimal wiggle.
inline std::pair<double, double> threshold_band(const ThresholdState& state,
                                                const DetectorParams& params) {
  const double dispersion = std::max(state.mad * params.mad_consistency, params.mad_floor);
  const double half = params.mad_k * dispersion;
  return {state.rolling_median - half, state.rolling_median + half};
}

inline std::optional<AnomalyFlag> flag_residual(double residual, const ThresholdState& state,
                                                const DetectorParams& params, Date date,
                                                const std::string& country) {
  const auto [lo, hi] = threshold_band(state, params);
  if (residual > hi) return AnomalyFlag{date, country, AnomalyClass::kDrop, residual, lo, hi};
  if (residual < lo)
    return AnomalyFlag{date, country, AnomalyClass::kIncrease, residual, lo, hi};
  return std::nullopt;
}

struct DetectorResult {
  ResidualSeries series;
  std::vector<AnomalyFlag> flags;                    // ordered by day, then column
  std::map<std::string, ThresholdState> thresholds;  // state after the last day
  Eigen::Index eval_begin = 0;                       // first evaluated row
  Eigen::Index eval_end = 0;                         // one past the last evaluated row
  int clamped_windows = 0;                           // windows where p hit q-1
};

namespace detail {

// Rolling median of raw usage per country, for rows [eval_begin, eval_end).
inline std::vector<std::vector<double>> rolling_usage_levels(const ObservationMatrix& matrix,
                                                             int window,
                                                             Eigen::Index eval_begin,
                                                             Eigen::Index eval_end,
                                                             int threads) {
  const auto n = matrix.country_count();
  const auto span = static_cast<std::size_t>(std::max<Eigen::Index>(eval_end - eval_begin, 0));
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t c) {
    auto& out = levels[c];
    out.resize(span);
    if (span == 0) return;
    SlidingMedian rolling(static_cast<std::size_t>(window));
    for (Eigen::Index t = eval_begin - window; t < eval_begin; ++t) {
      rolling.push(matrix.values(t, static_cast<Eigen::Index>(c)));
    }
    for (Eigen::Index t = eval_begin; t < eval_end; ++t) {
      out[static_cast<std::size_t>(t - eval_begin)] = rolling.median();
      if (t + 1 < eval_end) rolling.push(matrix.values(t, static_cast<Eigen::Index>(c)));
    }
  });
  return levels;
}

}  // namespace detail

// Rolling subspace analysis restricted to rows [eval_begin, eval_end), seeded
// with existing per-country residual histories. Each evaluated day t is
// standardized against, and projected with, components fitted on rows
// [t-window, t) only, so the day never explains itself.
inline DetectorResult run_detector_range(const ObservationMatrix& matrix,
                                         const DetectorParams& params,
                                         Eigen::Index eval_begin, Eigen::Index eval_end,
                                         std::map<std::string, ThresholdState> initial_states,
                                         int threads = 1) {
  params.validate();
  const auto m = matrix.day_count();
  const auto n = matrix.country_count();
  const auto window = static_cast<Eigen::Index>(params.window);
  if (n < 2) throw FeasibilityError("need at least 2 countries for subspace analysis");
  if (m < window + 1) {
    throw FeasibilityError("matrix has " + std::to_string(m) + " days; need at least " +
                           std::to_string(window + 1));
  }
  if (window <= n) {
    throw FeasibilityError("window (" + std::to_string(window) +
                           ") must exceed the country count (" + std::to_string(n) +
                           "); enlarge --window or raise --min-users");
  }

  eval_begin = std::max(eval_begin, window);
  eval_end = std::min(eval_end, m);

  DetectorResult result;
  result.eval_begin = eval_begin;
  result.eval_end = std::max(eval_end, eval_begin);
  result.series.dates = matrix.dates;
  result.series.countries = matrix.countries;
  result.series.records.assign(static_cast<std::size_t>(m) * static_cast<std::size_t>(n),
                               ResidualRecord{});
  for (Eigen::Index t = 0; t < m; ++t) {
    for (Eigen::Index c = 0; c < n; ++c) {
      result.series.at(static_cast<std::size_t>(t), static_cast<std::size_t>(c)).usage =
          matrix.values(t, c);
    }
  }
  if (eval_begin >= eval_end) return result;

  const auto levels =
      detail::rolling_usage_levels(matrix, params.window, eval_begin, eval_end, threads);

  // Phase 1: residuals per day, independent across days.
  const auto day_count = static_cast<std::size_t>(eval_end - eval_begin);
  std::vector<char> clamped_days(day_count, 0);
  std::mutex error_mutex;
  std::exception_ptr first_error;
  parallel_for(day_count, threads, [&](std::size_t i) {
    try {
      const Eigen::Index t = eval_begin + static_cast<Eigen::Index>(i);
      const auto sw = standardize(matrix.values.block(t - window, 0, window, n));
      bool clamped = false;
      const auto basis = select_components(fit_components(sw), params.components, &clamped);
      if (clamped) clamped_days[i] = 1;

      const auto q = static_cast<Eigen::Index>(sw.retained.size());
      Eigen::VectorXd z(q);
      for (Eigen::Index j = 0; j < q; ++j) {
        const auto c = sw.retained[static_cast<std::size_t>(j)];
        z(j) = (matrix.values(t, c) - sw.means(j)) / sw.scales(j);
      }
      const auto leading = basis.components.leftCols(basis.p);
      const Eigen::VectorXd projection = leading * (leading.transpose() * z);

      for (Eigen::Index j = 0; j < q; ++j) {
        const auto c = static_cast<std::size_t>(sw.retained[static_cast<std::size_t>(j)]);
        auto& record = result.series.at(static_cast<std::size_t>(t), c);
        record.predicted = sw.means(j) + sw.scales(j) * projection(j);
        const double raw = projection(j) - z(j);  // positive = usage below model
        record.residual =
            proportional_residual(raw, sw.scales(j), levels[c][i], params.scale_floor);
        record.evaluated = true;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  });
  if (first_error) std::rethrow_exception(first_error);
  for (char c : clamped_days) result.clamped_windows += c;

  // Phase 2: per-country threshold fold, sequential in time by definition.
  result.thresholds = std::move(initial_states);
  for (Eigen::Index t = eval_begin; t < eval_end; ++t) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto& record =
          result.series.at(static_cast<std::size_t>(t), static_cast<std::size_t>(c));
      if (!record.evaluated) continue;
      const auto& country = matrix.countries[static_cast<std::size_t>(c)];
      auto& state = result.thresholds[country];
      update_threshold(state, record.residual, params.window);
      if (state.history.size() < static_cast<std::size_t>(params.min_history)) continue;
      if (auto flag = flag_residual(record.residual, state, params,
                                    matrix.dates[static_cast<std::size_t>(t)], country)) {
        result.flags.push_back(std::move(*flag));
      }
    }
  }
  return result;
}

inline DetectorResult run_detector(const ObservationMatrix& matrix,
                                   const DetectorParams& params, int threads = 1) {
  return run_detector_range(matrix, params, 0, matrix.day_count(), {}, threads);
}

// Reconstructs per-country threshold states as they stood just before row
// `day`: the last `window` evaluated residuals per country. Lets a run over a
// tail of the matrix continue exactly where a full run would be.
inline std::map<std::string, ThresholdState> threshold_states_at(const ResidualSeries& series,
                                                                 const DetectorParams& params,
                                                                 Eigen::Index day) {
  std::map<std::string, ThresholdState> states;
  const auto n = series.countries.size();
  const auto limit = static_cast<std::size_t>(params.window);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> recent;
    const auto last = std::min<std::size_t>(static_cast<std::size_t>(std::max<Eigen::Index>(day, 0)),
                                            series.dates.size());
    for (std::size_t t = last; t-- > 0;) {
      const auto& record = series.at(t, c);
      if (!record.evaluated) continue;
      recent.push_back(record.residual);
      if (recent.size() == limit) break;
    }
    if (recent.empty()) continue;
    ThresholdState state;
    state.history.assign(recent.rbegin(), recent.rend());
    std::vector<double> values(state.history.begin(), state.history.end());
    state.rolling_median = median(values);
    state.mad = mad(values, state.rolling_median);
    states.emplace(series.countries[c], std::move(state));
  }
  return states;
}

}  // namespace usagewatch
