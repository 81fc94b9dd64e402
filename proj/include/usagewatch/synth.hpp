#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "usagewatch/date.hpp"
#include "usagewatch/detector.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/observation.hpp"
#include "usagewatch/usage_table.hpp"
#include "usagewatch/util.hpp"

namespace usagewatch {

// One synthetic anomaly: the country's usage is multiplied by a factor that
// ramps linearly from 1 to 1+magnitude over ramp_days, holds for hold_days,
// then snaps back to 1.
struct InjectionSpec {
  std::string country;
  Date start;
  int ramp_days = 7;
  double magnitude = 0.0;  // fractional change in [-1, +1]
  int hold_days = 0;
  std::uint64_t seed = 0;  // stream that drew this spec, for provenance

  int active_days() const { return ramp_days + hold_days; }

  void validate() const {
    if (country.empty()) throw ParameterError("injection country is empty");
    if (ramp_days < 1) throw ParameterError("ramp_days must be at least 1");
    if (hold_days < 0) throw ParameterError("hold_days must be non-negative");
    if (!(std::abs(magnitude) <= 1.0))
      throw ParameterError("injection magnitude must lie in [-1, +1]");
  }
};

inline double injection_multiplier(const InjectionSpec& spec, Date date) {
  const auto d = date - spec.start;
  if (d < 0 || d >= spec.active_days()) return 1.0;
  if (d < spec.ramp_days) {
    return 1.0 + spec.magnitude * static_cast<double>(d + 1) /
                     static_cast<double>(spec.ramp_days);
  }
  return 1.0 + spec.magnitude;
}

inline UsageTable inject(const UsageTable& table, const InjectionSpec& spec) {
  spec.validate();
  if (table.by_country().find(spec.country) == table.by_country().end()) {
    throw ParameterError("injection country '" + spec.country + "' not present in table");
  }
  const auto [first, last] = table.date_range();
  if (spec.start < first || spec.start + (spec.active_days() - 1) > last) {
    throw ParameterError("injection window exceeds the data range");
  }
  UsageTable out;
  for (const auto& [country, series] : table.by_country()) {
    const bool target = country == spec.country;
    for (const auto& [date, users] : series) {
      const double v = target ? std::max(0.0, users * injection_multiplier(spec, date)) : users;
      out.insert(date, country, v);
    }
  }
  return out;
}

// An injected anomaly counts as detected when strictly more than half of its
// active days carry a flag for the target country.
inline bool judge_detection(const std::vector<AnomalyFlag>& flags, const InjectionSpec& spec) {
  const Date end = spec.start + spec.active_days();
  std::set<Date> flagged;
  for (const auto& flag : flags) {
    if (flag.country != spec.country) continue;
    if (flag.date < spec.start || flag.date >= end) continue;
    flagged.insert(flag.date);
  }
  return 2 * static_cast<int>(flagged.size()) > spec.active_days();
}

struct RateBucket {
  double magnitude = 0.0;  // signed grid value
  int runs = 0;
  int detected = 0;
  double rate() const { return runs == 0 ? 0.0 : static_cast<double>(detected) / runs; }
};

struct DetectionRateReport {
  std::vector<RateBucket> buckets;  // ordered by signed magnitude
  int total_runs = 0;
  std::uint64_t seed = 0;
};

struct ExperimentGrid {
  std::string country;
  Date start_from;                 // inclusive range the anomaly start is drawn from
  Date start_to;
  std::vector<double> magnitudes;  // signed values; one rate bucket each
  int ramp_min = 7;
  int ramp_max = 49;
  int hold_days = -1;              // -1: hold equals the drawn ramp
  std::int64_t max_gap = 7;        // assembly setting for injected tables

  int max_active_days() const {
    return ramp_max + (hold_days < 0 ? ramp_max : hold_days);
  }

  void validate() const {
    if (country.empty()) throw ParameterError("experiment country is empty");
    if (start_from > start_to) throw ParameterError("experiment start range is empty");
    if (magnitudes.empty()) throw ParameterError("experiment magnitude grid is empty");
    for (double m : magnitudes) {
      if (!(std::abs(m) <= 1.0))
        throw ParameterError("experiment magnitudes must lie in [-1, +1]");
    }
    if (ramp_min < 1 || ramp_max < ramp_min)
      throw ParameterError("experiment ramp range is invalid");
  }
};

inline std::vector<double> default_magnitude_grid() {
  std::vector<double> grid;
  for (int i = 10; i >= 1; --i) grid.push_back(-0.1 * i);
  for (int i = 1; i <= 10; ++i) grid.push_back(0.1 * i);
  return grid;
}

// Countries with no flag dated inside [from, to]; candidates for injection
// targets whose baseline is quiet.
inline std::vector<std::string> countries_without_flags(const std::vector<AnomalyFlag>& flags,
                                                        Date from, Date to,
                                                        const std::vector<std::string>& countries) {
  std::set<std::string> noisy;
  for (const auto& flag : flags) {
    if (flag.date >= from && flag.date <= to) noisy.insert(flag.country);
  }
  std::vector<std::string> clean;
  for (const auto& c : countries) {
    if (noisy.find(c) == noisy.end()) clean.push_back(c);
  }
  return clean;
}

namespace detail {

// True when the country has an observation for every day of the table range,
// in which case injecting into the assembled matrix is exact.
inline bool series_is_complete(const UsageTable& table, const std::string& country) {
  const auto it = table.by_country().find(country);
  if (it == table.by_country().end()) return false;
  const auto [first, last] = table.date_range();
  return static_cast<std::int64_t>(it->second.size()) == last - first + 1;
}

}  // namespace detail

// Repeated inject-detect-judge trials over a seeded parameter grid. Run i
// takes magnitude grid[i % grid.size()] (so bucket sizes are balanced) and
// draws ramp length and start date from its own derived stream. Each trial
// re-evaluates only the days the injection can influence, seeded with the
// baseline run's threshold histories; results are identical to a full re-run.
inline DetectionRateReport run_experiment(const UsageTable& baseline,
                                          const DetectorParams& params,
                                          const ExperimentGrid& grid, int runs,
                                          std::uint64_t seed, int threads = 1) {
  params.validate();
  grid.validate();
  if (runs <= 0) throw ParameterError("experiment needs a positive run count");

  std::vector<double> magnitudes = grid.magnitudes;
  std::sort(magnitudes.begin(), magnitudes.end());
  magnitudes.erase(std::unique(magnitudes.begin(), magnitudes.end()), magnitudes.end());

  const ObservationMatrix matrix = assemble_matrix(baseline, grid.max_gap);
  if (!matrix.column_of(grid.country)) {
    throw ParameterError("experiment country '" + grid.country +
                         "' missing from the assembled matrix");
  }
  const Date first = matrix.dates.front();
  const Date last = matrix.dates.back();
  const int max_active = grid.max_active_days();
  if (grid.start_from < first + (params.window + params.min_history) ||
      grid.start_to + (max_active - 1) > last) {
    throw ParameterError("experiment start range needs " +
                         std::to_string(params.window + params.min_history) +
                         " lead-in days and " + std::to_string(max_active) +
                         " trailing days inside the data range");
  }

  const DetectorResult base = run_detector(matrix, params, threads);
  for (const auto& flag : base.flags) {
    if (flag.country != grid.country) continue;
    if (flag.date >= grid.start_from && flag.date < grid.start_to + max_active) {
      throw InvalidBaselineError("baseline already flags " + grid.country + " on " +
                                 flag.date.to_string() +
                                 "; pick another country or period");
    }
  }

  const bool fast_inject = detail::series_is_complete(baseline, grid.country);
  const auto target_col = *matrix.column_of(grid.country);

  std::vector<std::atomic<int>> detected_counts(magnitudes.size());
  std::vector<std::atomic<int>> run_counts(magnitudes.size());
  for (auto& a : detected_counts) a.store(0);
  for (auto& a : run_counts) a.store(0);
  std::mutex error_mutex;
  std::exception_ptr first_error;

  parallel_for(static_cast<std::size_t>(runs), threads, [&](std::size_t i) {
    try {
      const std::size_t bucket = i % magnitudes.size();
      Rng rng(derive_seed(seed, i));
      InjectionSpec spec;
      spec.country = grid.country;
      spec.magnitude = magnitudes[bucket];
      spec.ramp_days = static_cast<int>(rng.uniform_int(grid.ramp_min, grid.ramp_max));
      spec.hold_days = grid.hold_days < 0 ? spec.ramp_days : grid.hold_days;
      const Date latest = last - (spec.active_days() - 1);
      const Date hi = std::min(grid.start_to, latest);
      spec.start = grid.start_from + rng.uniform_int(0, hi - grid.start_from);
      spec.seed = derive_seed(seed, i);

      ObservationMatrix injected;
      if (fast_inject) {
        injected = matrix;
        for (int d = 0; d < spec.active_days(); ++d) {
          const auto row = *matrix.row_of(spec.start + d);
          injected.values(row, target_col) = std::max(
              0.0, injected.values(row, target_col) * injection_multiplier(spec, spec.start + d));
        }
      } else {
        injected = assemble_matrix(inject(baseline, spec), grid.max_gap);
      }

      // First row the injection can influence; on the fast path this is the
      // anomaly start, on the assembly path interpolation may reach earlier.
      Eigen::Index changed = *matrix.row_of(spec.start);
      while (changed > 0 &&
             injected.values(changed - 1, target_col) != matrix.values(changed - 1, target_col)) {
        --changed;
      }
      const Eigen::Index judge_end = *matrix.row_of(spec.start) + spec.active_days();
      const auto states = threshold_states_at(base.series, params, changed);
      const auto tail = run_detector_range(injected, params, changed, judge_end, states, 1);

      run_counts[bucket].fetch_add(1, std::memory_order_relaxed);
      if (judge_detection(tail.flags, spec)) {
        detected_counts[bucket].fetch_add(1, std::memory_order_relaxed);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  });
  if (first_error) std::rethrow_exception(first_error);

  DetectionRateReport report;
  report.seed = seed;
  report.total_runs = runs;
  for (std::size_t b = 0; b < magnitudes.size(); ++b) {
    RateBucket bucket;
    bucket.magnitude = magnitudes[b];
    bucket.runs = run_counts[b].load();
    bucket.detected = detected_counts[b].load();
    report.buckets.push_back(bucket);
  }
  return report;
}

struct BaselineOptions {
  int countries = 50;
  int days = 500;
  int shared_factors = 12;       // shared smooth trends (first one global)
  double global_scale = 0.09;    // amplitude of the common level factor
  double factor_scale = 0.09;    // amplitude of the strongest signed factor
  double factor_decay = 0.0;    // geometric falloff of factor amplitudes
  double wobble_frac = 0.01;    // per-country smooth idiosyncratic movement
  double noise_frac = 0.018;     // per-country i.i.d. daily noise
  double level_min = 800.0;      // smallest country mean usage
  double level_max = 60000.0;    // largest country mean usage
  Date start = Date(15706);      // 2013-01-01
};

// Synthetic per-country usage: one global factor everyone follows, a ladder
// of weaker shared factors with signed per-country loadings, a private slow
// wobble, and i.i.d. daily noise. With enough countries the ladder keeps a
// dozen correlation eigenvalues above one, so a 12-component normal subspace
// models the shared structure without swallowing single-country deviations.
inline UsageTable make_correlated_baseline(const BaselineOptions& options, std::uint64_t seed) {
  if (options.countries < 2 || options.countries > 676) {
    throw ParameterError("baseline needs between 2 and 676 countries");
  }
  if (options.days < 2) throw ParameterError("baseline needs at least 2 days");
  if (!(options.noise_frac >= 0.0) || !(options.wobble_frac >= 0.0)) {
    throw ParameterError("noise fractions must be non-negative");
  }
  if (options.shared_factors < 1) throw ParameterError("need at least one shared factor");

  constexpr double two_pi = 6.283185307179586;
  constexpr double sqrt2 = 1.4142135623730951;

  Rng master(derive_seed(seed, 0));
  struct Wave {
    double period;
    double phase;
    double amplitude;
  };
  std::vector<Wave> factors;
  factors.reserve(static_cast<std::size_t>(options.shared_factors));
  for (int j = 0; j < options.shared_factors; ++j) {
    Wave wave;
    // periods log-spaced between a week and ~half a detection window, with a
    // little jitter; near-equal periods would merge into one sample component
    const double steps = std::max(options.shared_factors - 1, 1);
    const double position = static_cast<double>(j) / steps;
    wave.period = 7.0 * std::pow(90.0 / 7.0, position) * master.uniform(0.95, 1.05);
    wave.phase = master.uniform(0.0, wave.period);
    wave.amplitude =
        j == 0 ? options.global_scale
               : options.factor_scale * std::exp(-options.factor_decay * (j - 1));
    factors.push_back(wave);
  }

  UsageTable table;
  for (int c = 0; c < options.countries; ++c) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(c)));
    const std::string code = {static_cast<char>('a' + c / 26), static_cast<char>('a' + c % 26)};
    const double level =
        std::exp(rng.uniform(std::log(options.level_min), std::log(options.level_max)));

    // the global factor is followed by everyone; the rest carry signed,
    // zero-mean loadings so they span genuinely distinct directions
    std::vector<double> loadings;
    loadings.reserve(factors.size());
    for (std::size_t j = 0; j < factors.size(); ++j) {
      const double weight = j == 0 ? rng.uniform(0.6, 1.4) : rng.gaussian();
      loadings.push_back(factors[j].amplitude * weight);
    }
    const Wave wobble_a{std::exp(rng.uniform(std::log(15.0), std::log(120.0))),
                        rng.uniform(0.0, 120.0), options.wobble_frac * rng.uniform(0.5, 1.5)};
    const Wave wobble_b{std::exp(rng.uniform(std::log(15.0), std::log(120.0))),
                        rng.uniform(0.0, 120.0),
                        0.6 * options.wobble_frac * rng.uniform(0.5, 1.5)};
    const double drift = rng.uniform(-0.1, 0.3);

    for (int t = 0; t < options.days; ++t) {
      double shape = 1.0 + drift * static_cast<double>(t) / options.days;
      for (std::size_t j = 0; j < factors.size(); ++j) {
        shape += loadings[j] * sqrt2 *
                 std::sin(two_pi * (t + factors[j].phase) / factors[j].period);
      }
      shape += wobble_a.amplitude * sqrt2 *
               std::sin(two_pi * (t + wobble_a.phase) / wobble_a.period);
      shape += wobble_b.amplitude * sqrt2 *
               std::sin(two_pi * (t + wobble_b.phase) / wobble_b.period);
      const double noisy =
          level * std::max(0.05, shape) * (1.0 + options.noise_frac * rng.gaussian());
      table.insert(options.start + t, code, std::max(0.0, noisy));
    }
  }
  return table;
}

}  // namespace usagewatch
