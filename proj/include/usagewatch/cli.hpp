#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "usagewatch/fetch.hpp"
#include "usagewatch/usagewatch.hpp"

namespace usagewatch::cli {

inline constexpr const char* kToolVersion = "usagewatch/0.1.0";

namespace detail {

template <typename T>
T parse_value(const std::string& raw);

template <>
inline std::string parse_value<std::string>(const std::string& raw) {
  return raw;
}

template <typename T>
T parse_number_or_throw(const std::string& raw) {
  T value{};
  const std::string text = trim(raw);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("cannot parse value '" + raw + "'");
  }
  return value;
}

template <>
inline int parse_value<int>(const std::string& raw) {
  return parse_number_or_throw<int>(raw);
}
template <>
inline std::int64_t parse_value<std::int64_t>(const std::string& raw) {
  return parse_number_or_throw<std::int64_t>(raw);
}
template <>
inline std::uint64_t parse_value<std::uint64_t>(const std::string& raw) {
  return parse_number_or_throw<std::uint64_t>(raw);
}

template <>
inline double parse_value<double>(const std::string& raw) {
  const std::string text = trim(raw);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("cannot parse value '" + raw + "'");
  }
  return value;
}

template <>
inline std::vector<std::string> parse_value<std::vector<std::string>>(const std::string& raw) {
  std::vector<std::string> out;
  for (auto& field : split_delimited(raw)) {
    const std::string item = trim(field);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> parse_magnitude_list(const std::string& raw) {
  std::vector<double> out;
  for (auto& field : split_delimited(raw)) {
    const std::string item = trim(field);
    if (!item.empty()) out.push_back(parse_value<double>(item));
  }
  if (out.empty()) throw ParameterError("magnitude list is empty");
  return out;
}

}  // namespace detail

// Ties each --key flag to the matching `key = value` config-file entry.
// Precedence is flag over file over default: a file entry is applied only
// when its flag was not given on the command line.
class Bindings {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* cmd, const std::string& key, T& target,
                   const std::string& description) {
    auto* option = cmd->add_option("--" + key, target, description);
    entries_[key] = {option,
                     [&target](const std::string& raw) { target = detail::parse_value<T>(raw); }};
    return option;
  }

  void apply_file(const KeyValues& values) {
    for (const auto& [key, value] : values) {
      auto it = entries_.find(key);
      if (it == entries_.end()) continue;  // key belongs to another command
      if (it->second.option->count() > 0) continue;
      it->second.apply(value);
    }
  }

 private:
  struct Entry {
    CLI::Option* option = nullptr;
    std::function<void(const std::string&)> apply;
  };
  std::map<std::string, Entry> entries_;
};

struct Options {
  // shared
  std::vector<std::string> inputs;
  std::string config_file;
  std::string output_dir = ".";
  std::string format = "csv";
  int window = 180;
  std::string components = "12";  // component count or "kaiser"
  double mad_k = 2.5;
  double mad_consistency = kNormalMadConsistency;
  double scale_floor = 1.0;
  int min_history = 30;
  double min_users = 500.0;
  std::int64_t max_gap = 7;
  std::string from_text;
  std::string to_text;
  int threads = 0;  // 0: all hardware threads
  // rank
  std::size_t top = 10;
  int last_days = 0;  // 0: use --from/--to
  // inject
  std::string country = "be";
  std::string start_text;
  std::string start_from_text = "2013-08-21";
  std::string start_to_text = "2014-02-21";
  std::string magnitudes_text;  // comma separated; empty: default grid
  int ramp_min = 7;
  int ramp_max = 49;
  int hold_days = -1;
  int runs = 1000;
  std::uint64_t seed = 7;
  // evaluate
  std::string events_file;
  int tolerance_days = 0;
  // fetch
  std::string url;
  std::string output_file;
};

namespace detail {

inline Date parse_date_or_throw(const std::string& text, const std::string& what) {
  const auto date = Date::parse(trim(text));
  if (!date) throw ParameterError(what + ": expected YYYY-MM-DD, got '" + text + "'");
  return *date;
}

inline std::optional<Date> parse_optional_date(const std::string& text,
                                               const std::string& what) {
  if (trim(text).empty()) return std::nullopt;
  return parse_date_or_throw(text, what);
}

inline DetectorParams detector_params(const Options& options) {
  DetectorParams params;
  params.window = options.window;
  const std::string policy = to_lower(trim(options.components));
  if (policy == "kaiser") {
    params.components = ComponentPolicy::kaiser();
  } else {
    params.components = ComponentPolicy::fixed(parse_value<int>(policy));
  }
  params.mad_k = options.mad_k;
  params.mad_consistency = options.mad_consistency;
  params.scale_floor = options.scale_floor;
  params.min_history = options.min_history;
  params.validate();
  return params;
}

// Relative inputs fall back to $USAGEWATCH_DATA_DIR when not found directly.
inline std::string resolve_input_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("USAGEWATCH_DATA_DIR")) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

struct LoadedData {
  UsageTable table;
  ParseStats stats;
  Meta digests;
};

inline LoadedData load_inputs(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ParameterError("no --input file given");
  LoadedData data;
  std::size_t index = 0;
  for (const auto& raw_path : inputs) {
    const std::string path = resolve_input_path(raw_path);
    const std::string bytes = [&] {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot open input file: " + raw_path);
      std::ostringstream buffer;
      buffer << in.rdbuf();
      return buffer.str();
    }();
    data.digests["input_" + std::to_string(index)] = raw_path;
    data.digests["input_digest_" + std::to_string(index)] = fnv1a64_hex(bytes);
    std::istringstream stream(bytes);
    ParseStats stats;
    UsageTable table = parse_userstats(stream, &stats);
    data.stats.rows_parsed += stats.rows_parsed;
    data.stats.rows_skipped += stats.rows_skipped;
    for (const auto& [country, series] : table.by_country()) {
      for (const auto& [date, users] : series) data.table.insert(date, country, users);
    }
    ++index;
  }
  return data;
}

inline Meta analysis_meta(const Options& options, const std::string& command) {
  Meta meta;
  meta["tool"] = kToolVersion;
  meta["command"] = command;
  meta["window"] = std::to_string(options.window);
  meta["components"] = to_lower(trim(options.components));
  meta["mad_k"] = format_double(options.mad_k);
  meta["mad_consistency"] = format_double(options.mad_consistency);
  meta["scale_floor"] = format_double(options.scale_floor);
  meta["min_history"] = std::to_string(options.min_history);
  meta["min_users"] = format_double(options.min_users);
  meta["max_gap"] = std::to_string(options.max_gap);
  meta["format"] = options.format;
  if (!trim(options.from_text).empty()) meta["from"] = trim(options.from_text);
  if (!trim(options.to_text).empty()) meta["to"] = trim(options.to_text);
  return meta;
}

inline std::string output_path(const Options& options, const std::string& name) {
  return (std::filesystem::path(options.output_dir) / name).string();
}

inline void check_format(const Options& options) {
  if (options.format != "csv" && options.format != "json") {
    throw ParameterError("format must be csv or json, got '" + options.format + "'");
  }
}

}  // namespace detail

inline int cmd_detect(const Options& options) {
  detail::check_format(options);
  const auto params = detail::detector_params(options);
  const auto from = detail::parse_optional_date(options.from_text, "--from");
  const auto to = detail::parse_optional_date(options.to_text, "--to");
  if (from && to && *from > *to) throw ParameterError("--from is after --to");

  auto data = detail::load_inputs(options.inputs);
  const auto filtered = filter_countries(data.table, options.min_users);
  AssemblyReport assembly;
  const auto matrix = assemble_matrix(filtered, options.max_gap, &assembly);
  const auto result = run_detector(matrix, params, options.threads);

  Meta meta = detail::analysis_meta(options, "detect");
  for (const auto& [k, v] : data.digests) meta[k] = v;

  const bool json = options.format == "json";
  const std::string residuals_name = json ? "residuals.json" : "residuals.csv";
  const std::string flags_name = json ? "flags.json" : "flags.csv";
  const std::string residuals_out =
      json ? residuals_json(result.series, meta, from, to).dump(2) + "\n"
           : residuals_csv(result.series, meta, from, to);
  const std::string flags_out = json ? flags_json(result.flags, meta, from, to).dump(2) + "\n"
                                     : flags_csv(result.flags, meta, from, to);

  nlohmann::json summary;
  summary["meta"] = meta;
  summary["rows_parsed"] = data.stats.rows_parsed;
  summary["rows_skipped"] = data.stats.rows_skipped;
  summary["countries_loaded"] = data.table.country_count();
  summary["countries_analyzed"] = matrix.country_count();
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& d : assembly.dropped) {
    dropped.push_back({{"country", d.country}, {"longest_gap", d.longest_gap}});
  }
  summary["countries_dropped_for_gaps"] = dropped;
  summary["filled_cells"] = assembly.filled_cells;
  summary["days"] = matrix.day_count();
  summary["evaluated_days"] = result.eval_end - result.eval_begin;
  summary["clamped_windows"] = result.clamped_windows;
  summary["flag_count"] = result.flags.size();
  summary["outputs"] = {residuals_name, flags_name};

  write_text_file(detail::output_path(options, residuals_name), residuals_out);
  write_text_file(detail::output_path(options, flags_name), flags_out);
  write_text_file(detail::output_path(options, "summary.json"), summary.dump(2) + "\n");

  std::cout << "analyzed " << matrix.country_count() << " countries over "
            << matrix.day_count() << " days; " << result.flags.size() << " flags\n"
            << "wrote " << residuals_name << ", " << flags_name << ", summary.json to "
            << options.output_dir << "\n";
  return 0;
}

inline int cmd_rank(const Options& options) {
  detail::check_format(options);
  const auto params = detail::detector_params(options);
  if (options.top == 0) throw ParameterError("--top must be positive");

  auto data = detail::load_inputs(options.inputs);
  const auto filtered = filter_countries(data.table, options.min_users);
  const auto matrix = assemble_matrix(filtered, options.max_gap);
  const auto result = run_detector(matrix, params, options.threads);

  Date from = matrix.dates.front();
  Date to = matrix.dates.back();
  if (options.last_days > 0) {
    if (!trim(options.from_text).empty() || !trim(options.to_text).empty()) {
      throw ParameterError("--last-days cannot be combined with --from/--to");
    }
    from = to - (options.last_days - 1);
  } else {
    if (const auto f = detail::parse_optional_date(options.from_text, "--from")) from = *f;
    if (const auto t = detail::parse_optional_date(options.to_text, "--to")) to = *t;
  }

  const auto ranking = rank_countries(result.series, from, to, options.top, params.min_history);

  Meta meta = detail::analysis_meta(options, "rank");
  for (const auto& [k, v] : data.digests) meta[k] = v;
  meta["rank_from"] = from.to_string();
  meta["rank_to"] = to.to_string();
  meta["top"] = std::to_string(options.top);

  const bool json = options.format == "json";
  const std::string name = json ? "ranking.json" : "ranking.csv";
  const std::string out =
      json ? ranking_json(ranking, meta).dump(2) + "\n" : ranking_csv(ranking, meta);
  write_text_file(detail::output_path(options, name), out);

  std::cout << "rank  country  score        days\n";
  for (const auto& r : ranking.ranks) {
    std::string rank = std::to_string(r.rank);
    rank.resize(5, ' ');
    std::string score = format_double(r.score);
    score.resize(12, ' ');
    std::cout << rank << ' ' << r.country << "       " << score << ' ' << r.days << "\n";
  }
  if (!ranking.excluded.empty()) {
    std::cout << ranking.excluded.size()
              << " countries excluded for insufficient evaluated days\n";
  }
  std::cout << "wrote " << name << " to " << options.output_dir << "\n";
  return 0;
}

inline int cmd_inject(const Options& options) {
  detail::check_format(options);
  const auto params = detail::detector_params(options);
  if (options.runs <= 0) throw ParameterError("--runs must be positive");

  ExperimentGrid grid;
  grid.country = to_lower(trim(options.country));
  if (!trim(options.start_text).empty()) {
    grid.start_from = detail::parse_date_or_throw(options.start_text, "--start");
    grid.start_to = grid.start_from;
  } else {
    grid.start_from = detail::parse_date_or_throw(options.start_from_text, "--start-from");
    grid.start_to = detail::parse_date_or_throw(options.start_to_text, "--start-to");
  }
  grid.magnitudes = trim(options.magnitudes_text).empty()
                        ? default_magnitude_grid()
                        : detail::parse_magnitude_list(options.magnitudes_text);
  grid.ramp_min = options.ramp_min;
  grid.ramp_max = options.ramp_max;
  grid.hold_days = options.hold_days;
  grid.max_gap = options.max_gap;

  auto data = detail::load_inputs(options.inputs);
  const auto filtered = filter_countries(data.table, options.min_users);
  const auto report =
      run_experiment(filtered, params, grid, options.runs, options.seed, options.threads);

  Meta meta = detail::analysis_meta(options, "inject");
  for (const auto& [k, v] : data.digests) meta[k] = v;
  meta["country"] = grid.country;
  meta["start_from"] = grid.start_from.to_string();
  meta["start_to"] = grid.start_to.to_string();
  meta["ramp_min"] = std::to_string(grid.ramp_min);
  meta["ramp_max"] = std::to_string(grid.ramp_max);
  meta["hold_days"] = std::to_string(grid.hold_days);
  meta["runs"] = std::to_string(options.runs);
  meta["seed"] = std::to_string(options.seed);

  const bool json = options.format == "json";
  const std::string name = json ? "rates.json" : "rates.csv";
  const std::string out =
      json ? rates_json(report, meta).dump(2) + "\n" : rates_csv(report, meta);
  write_text_file(detail::output_path(options, name), out);

  std::cout << "magnitude  sign  runs  detected  rate\n";
  for (const auto& b : report.buckets) {
    std::string mag = format_double(std::abs(b.magnitude));
    mag.resize(10, ' ');
    std::string runs = std::to_string(b.runs);
    runs.resize(5, ' ');
    std::string detected = std::to_string(b.detected);
    detected.resize(9, ' ');
    std::cout << mag << ' ' << (b.magnitude < 0 ? '-' : '+') << "     " << runs << ' '
              << detected << ' ' << format_double(b.rate()) << "\n";
  }
  std::cout << "wrote " << name << " to " << options.output_dir << "\n";
  return 0;
}

inline int cmd_evaluate(const Options& options) {
  detail::check_format(options);
  const auto params = detail::detector_params(options);
  if (trim(options.events_file).empty()) throw ParameterError("--events file is required");
  if (options.tolerance_days < 0) throw ParameterError("--tolerance-days must be >= 0");

  const auto events = load_events_file(detail::resolve_input_path(options.events_file));
  auto data = detail::load_inputs(options.inputs);
  const auto filtered = filter_countries(data.table, options.min_users);
  const auto matrix = assemble_matrix(filtered, options.max_gap);
  const auto result = run_detector(matrix, params, options.threads);
  const auto card = score_events(result.flags, events, options.tolerance_days);

  Meta meta = detail::analysis_meta(options, "evaluate");
  for (const auto& [k, v] : data.digests) meta[k] = v;
  meta["events"] = options.events_file;
  meta["tolerance_days"] = std::to_string(options.tolerance_days);

  const bool json = options.format == "json";
  const std::string name = json ? "scorecard.json" : "scorecard.csv";
  const std::string out =
      json ? scorecard_json(card, meta).dump(2) + "\n" : scorecard_csv(card, meta);
  write_text_file(detail::output_path(options, name), out);

  std::cout << scorecard_text(card);
  std::cout << "wrote " << name << " to " << options.output_dir << "\n";
  return 0;
}

inline int cmd_fetch(const Options& options) {
  if (trim(options.url).empty()) throw ParameterError("--url is required");
  std::string dest = options.output_file;
  if (trim(dest).empty()) {
    const auto split = usagewatch::detail::split_url(options.url);
    std::string name = std::filesystem::path(split.path).filename().string();
    if (const auto query = name.find('?'); query != std::string::npos) {
      name = name.substr(0, query);
    }
    dest = name.empty() ? "download.dat" : name;
  }
  fetch_url(options.url, dest);
  std::cout << "fetched " << options.url << " -> " << dest << "\n";
  return 0;
}

// Builds the CLI and runs the selected command. Kept separate from main() so
// tests can drive it in-process.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Per-country usage anomaly detection via rolling PCA subspace analysis"};
  app.require_subcommand(1);

  Options options;
  std::map<CLI::App*, Bindings> bindings;
  std::map<CLI::App*, std::function<int(const Options&)>> actions;

  auto add_shared = [&](CLI::App* cmd, bool with_detector) {
    auto& b = bindings[cmd];
    b.add(cmd, "input", options.inputs, "input usage CSV (repeatable)");
    cmd->add_option("--config", options.config_file, "key = value configuration file");
    b.add(cmd, "output-dir", options.output_dir, "directory for output files");
    b.add(cmd, "format", options.format, "output format: csv or json");
    b.add(cmd, "min-users", options.min_users, "drop countries never reaching this usage");
    b.add(cmd, "max-gap", options.max_gap, "longest missing run to interpolate, days");
    b.add(cmd, "threads", options.threads, "worker threads (0 = all)");
    if (with_detector) {
      b.add(cmd, "window", options.window, "rolling window length, days");
      b.add(cmd, "components", options.components, "normal-subspace size or 'kaiser'");
      b.add(cmd, "mad-k", options.mad_k, "threshold width in MADs");
      b.add(cmd, "mad-consistency", options.mad_consistency,
            "MAD-to-sigma factor for the threshold band");
      b.add(cmd, "scale-floor", options.scale_floor, "usage-level floor for residual scaling");
      b.add(cmd, "min-history", options.min_history, "residual days required before flagging");
    }
  };

  auto* detect = app.add_subcommand("detect", "compute residuals and anomaly flags");
  add_shared(detect, true);
  bindings[detect].add(detect, "from", options.from_text, "restrict output from this day");
  bindings[detect].add(detect, "to", options.to_text, "restrict output up to this day");
  actions[detect] = cmd_detect;

  auto* rank = app.add_subcommand("rank", "rank countries by residual dispersion");
  add_shared(rank, true);
  bindings[rank].add(rank, "from", options.from_text, "rank period start");
  bindings[rank].add(rank, "to", options.to_text, "rank period end");
  bindings[rank].add(rank, "last-days", options.last_days, "rank over the trailing N days");
  bindings[rank].add(rank, "top", options.top, "number of countries to list");
  actions[rank] = cmd_rank;

  auto* inject = app.add_subcommand("inject", "run injected-anomaly detection experiments");
  add_shared(inject, true);
  bindings[inject].add(inject, "country", options.country, "injection target country");
  bindings[inject].add(inject, "start", options.start_text,
                       "inject at exactly this day (overrides the range)");
  bindings[inject].add(inject, "start-from", options.start_from_text,
                       "earliest injection start");
  bindings[inject].add(inject, "start-to", options.start_to_text, "latest injection start");
  bindings[inject].add(inject, "magnitudes", options.magnitudes_text,
                       "comma-separated signed magnitudes");
  bindings[inject].add(inject, "ramp-min", options.ramp_min, "shortest ramp, days");
  bindings[inject].add(inject, "ramp-max", options.ramp_max, "longest ramp, days");
  bindings[inject].add(inject, "hold-days", options.hold_days,
                       "plateau length (-1 = same as ramp)");
  bindings[inject].add(inject, "runs", options.runs, "number of injection trials");
  bindings[inject].add(inject, "seed", options.seed, "experiment seed");
  actions[inject] = cmd_inject;

  auto* evaluate = app.add_subcommand("evaluate", "score detector output against known events");
  add_shared(evaluate, true);
  bindings[evaluate].add(evaluate, "events", options.events_file,
                         "events file: date,country,description,applicable");
  bindings[evaluate].add(evaluate, "tolerance-days", options.tolerance_days,
                         "match window around each event date");
  actions[evaluate] = cmd_evaluate;

  auto* fetch = app.add_subcommand("fetch", "download a usage export over HTTP");
  {
    auto& b = bindings[fetch];
    fetch->add_option("--config", options.config_file, "key = value configuration file");
    b.add(fetch, "url", options.url, "URL to download");
    b.add(fetch, "output", options.output_file, "destination file");
  }
  actions[fetch] = cmd_fetch;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* selected = app.get_subcommands().front();
  try {
    if (!trim(options.config_file).empty()) {
      bindings[selected].apply_file(load_key_values(options.config_file));
    }
    return actions[selected](options);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DuplicateEntryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FeasibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidBaselineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace usagewatch::cli
