#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "usagewatch/csv.hpp"
#include "usagewatch/detector.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/events.hpp"
#include "usagewatch/ranking.hpp"
#include "usagewatch/synth.hpp"
#include "usagewatch/util.hpp"

namespace usagewatch {

// Resolved configuration and input fingerprints, embedded in every output.
using Meta = std::map<std::string, std::string>;

namespace detail {

inline void write_meta_comments(std::ostream& out, const Meta& meta) {
  for (const auto& [key, value] : meta) out << "# " << key << " = " << value << '\n';
}

inline bool in_range(Date d, const std::optional<Date>& from, const std::optional<Date>& to) {
  if (from && d < *from) return false;
  if (to && d > *to) return false;
  return true;
}

inline nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace detail

inline std::string residuals_csv(const ResidualSeries& series, const Meta& meta,
                                 std::optional<Date> from = std::nullopt,
                                 std::optional<Date> to = std::nullopt) {
  std::ostringstream out;
  detail::write_meta_comments(out, meta);
  out << "date,country,usage,predicted,residual,evaluated\n";
  for (std::size_t t = 0; t < series.dates.size(); ++t) {
    if (!detail::in_range(series.dates[t], from, to)) continue;
    const std::string date = series.dates[t].to_string();
    for (std::size_t c = 0; c < series.countries.size(); ++c) {
      const auto& r = series.at(t, c);
      out << date << ',' << series.countries[c] << ',' << format_double(r.usage) << ',';
      if (r.evaluated) {
        out << format_double(r.predicted) << ',' << format_double(r.residual);
      } else {
        out << ',';
      }
      out << ',' << (r.evaluated ? "true" : "false") << '\n';
    }
  }
  return out.str();
}

inline std::string flags_csv(const std::vector<AnomalyFlag>& flags, const Meta& meta,
                             std::optional<Date> from = std::nullopt,
                             std::optional<Date> to = std::nullopt) {
  std::ostringstream out;
  detail::write_meta_comments(out, meta);
  out << "date,country,class,residual,threshold_low,threshold_high\n";
  for (const auto& f : flags) {
    if (!detail::in_range(f.date, from, to)) continue;
    out << f.date.to_string() << ',' << f.country << ',' << to_string(f.anomaly_class) << ','
        << format_double(f.residual) << ',' << format_double(f.threshold_low) << ','
        << format_double(f.threshold_high) << '\n';
  }
  return out.str();
}

inline std::string ranking_csv(const RankingResult& ranking, const Meta& meta) {
  std::ostringstream out;
  detail::write_meta_comments(out, meta);
  out << "rank,country,score,days\n";
  for (const auto& r : ranking.ranks) {
    out << r.rank << ',' << r.country << ',' << format_double(r.score) << ',' << r.days << '\n';
  }
  return out.str();
}

inline std::string rates_csv(const DetectionRateReport& report, const Meta& meta) {
  std::ostringstream out;
  detail::write_meta_comments(out, meta);
  out << "magnitude,sign,runs,detected,rate\n";
  for (const auto& b : report.buckets) {
    out << format_double(std::abs(b.magnitude)) << ',' << (b.magnitude < 0 ? "-" : "+") << ','
        << b.runs << ',' << b.detected << ',' << format_double(b.rate()) << '\n';
  }
  return out.str();
}

inline std::string scorecard_csv(const Scorecard& card, const Meta& meta) {
  std::ostringstream out;
  detail::write_meta_comments(out, meta);
  out << "date,country,description,applicable,status,matched_flag\n";
  for (const auto& o : card.outcomes) {
    out << o.event.date.to_string() << ',' << o.event.country << ','
        << csv_escape(o.event.description) << ',' << (o.event.applicable ? "true" : "false")
        << ',' << to_string(o.status) << ','
        << (o.matched_flag ? o.matched_flag->to_string() : "") << '\n';
  }
  return out.str();
}

inline nlohmann::json residuals_json(const ResidualSeries& series, const Meta& meta,
                                     std::optional<Date> from = std::nullopt,
                                     std::optional<Date> to = std::nullopt) {
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t t = 0; t < series.dates.size(); ++t) {
    if (!detail::in_range(series.dates[t], from, to)) continue;
    for (std::size_t c = 0; c < series.countries.size(); ++c) {
      const auto& r = series.at(t, c);
      records.push_back({{"date", series.dates[t].to_string()},
                         {"country", series.countries[c]},
                         {"usage", detail::json_number(r.usage)},
                         {"predicted", detail::json_number(r.predicted)},
                         {"residual", detail::json_number(r.residual)},
                         {"evaluated", r.evaluated}});
    }
  }
  return {{"meta", meta}, {"records", records}};
}

inline nlohmann::json flags_json(const std::vector<AnomalyFlag>& flags, const Meta& meta,
                                 std::optional<Date> from = std::nullopt,
                                 std::optional<Date> to = std::nullopt) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& f : flags) {
    if (!detail::in_range(f.date, from, to)) continue;
    records.push_back({{"date", f.date.to_string()},
                       {"country", f.country},
                       {"class", to_string(f.anomaly_class)},
                       {"residual", f.residual},
                       {"threshold_low", f.threshold_low},
                       {"threshold_high", f.threshold_high}});
  }
  return {{"meta", meta}, {"records", records}};
}

inline nlohmann::json ranking_json(const RankingResult& ranking, const Meta& meta) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : ranking.ranks) {
    records.push_back(
        {{"rank", r.rank}, {"country", r.country}, {"score", r.score}, {"days", r.days}});
  }
  return {{"meta", meta}, {"records", records}, {"excluded", ranking.excluded}};
}

inline nlohmann::json rates_json(const DetectionRateReport& report, const Meta& meta) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& b : report.buckets) {
    records.push_back({{"magnitude", std::abs(b.magnitude)},
                       {"sign", b.magnitude < 0 ? "-" : "+"},
                       {"runs", b.runs},
                       {"detected", b.detected},
                       {"rate", b.rate()}});
  }
  return {{"meta", meta}, {"records", records}, {"total_runs", report.total_runs}};
}

inline nlohmann::json scorecard_json(const Scorecard& card, const Meta& meta) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& o : card.outcomes) {
    nlohmann::json record = {{"date", o.event.date.to_string()},
                             {"country", o.event.country},
                             {"description", o.event.description},
                             {"applicable", o.event.applicable},
                             {"status", to_string(o.status)}};
    record["matched_flag"] =
        o.matched_flag ? nlohmann::json(o.matched_flag->to_string()) : nlohmann::json(nullptr);
    records.push_back(std::move(record));
  }
  return {{"meta", meta},
          {"counts",
           {{"detected", card.detected},
            {"missed", card.missed},
            {"not_applicable", card.not_applicable},
            {"total", card.total()}}},
          {"records", records}};
}

// Human-readable scorecard for the terminal.
inline std::string scorecard_text(const Scorecard& card) {
  std::ostringstream out;
  out << "event date  country  status          description\n";
  for (const auto& o : card.outcomes) {
    std::string status = to_string(o.status);
    status.resize(15, ' ');
    out << o.event.date.to_string() << "  " << o.event.country << "       " << status << ' '
        << o.event.description << '\n';
  }
  out << "detected " << card.detected << " / " << (card.detected + card.missed)
      << " applicable events (" << card.not_applicable << " not applicable)\n";
  return out.str();
}

// Writes via a temp file and rename, so failed runs leave no partial output.
inline void write_text_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place: " + target.string());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace usagewatch
