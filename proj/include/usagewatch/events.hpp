#pragma once

#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "usagewatch/csv.hpp"
#include "usagewatch/date.hpp"
#include "usagewatch/detector.hpp"
#include "usagewatch/errors.hpp"

namespace usagewatch {

// An externally reported blocking/filtering event. Events marked not
// applicable (e.g. they only touched a dataset we do not ingest) are carried
// through reports but never scored.
struct KnownEvent {
  Date date;
  std::string country;
  std::string description;
  bool applicable = true;
};

namespace detail {

inline std::optional<bool> parse_bool(std::string_view raw) {
  const std::string v = to_lower(trim(raw));
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  return std::nullopt;
}

}  // namespace detail

// Reads a date,country,description,applicable file. A header row is optional;
// '#' comment lines are ignored.
inline std::vector<KnownEvent> load_events(std::istream& in) {
  std::vector<KnownEvent> events;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto fields = split_delimited(line);
    if (!seen_content) {
      seen_content = true;
      if (!Date::parse(trim(fields[0]))) continue;  // header row
    }
    if (fields.size() < 4) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected date,country,description,applicable");
    }
    KnownEvent event;
    const auto date = Date::parse(trim(fields[0]));
    if (!date) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed date '" + fields[0] +
                       "'");
    }
    event.date = *date;
    event.country = to_lower(trim(fields[1]));
    if (event.country.size() != 2) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed country '" + fields[1] +
                       "'");
    }
    event.description = trim(fields[2]);
    const auto applicable = detail::parse_bool(fields[3]);
    if (!applicable) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed applicable flag '" +
                       fields[3] + "'");
    }
    event.applicable = *applicable;
    events.push_back(std::move(event));
  }
  if (events.empty()) throw ParameterError("events file contains no events");
  return events;
}

inline std::vector<KnownEvent> load_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open events file: " + path);
  return load_events(in);
}

enum class EventStatus { kDetected, kMissed, kNotApplicable };

inline const char* to_string(EventStatus s) {
  switch (s) {
    case EventStatus::kDetected: return "detected";
    case EventStatus::kMissed: return "missed";
    default: return "not_applicable";
  }
}

struct EventOutcome {
  KnownEvent event;
  EventStatus status = EventStatus::kMissed;
  std::optional<Date> matched_flag;  // nearest qualifying flag date
};

struct Scorecard {
  std::vector<EventOutcome> outcomes;
  int detected = 0;
  int missed = 0;
  int not_applicable = 0;

  int total() const { return detected + missed + not_applicable; }
};

// An applicable event is detected when any flag for its country lands within
// tolerance_days of its date.
inline Scorecard score_events(const std::vector<AnomalyFlag>& flags,
                              const std::vector<KnownEvent>& events, int tolerance_days = 0) {
  if (tolerance_days < 0) throw ParameterError("tolerance_days must be non-negative");
  Scorecard card;
  for (const auto& event : events) {
    EventOutcome outcome;
    outcome.event = event;
    if (!event.applicable) {
      outcome.status = EventStatus::kNotApplicable;
      ++card.not_applicable;
      card.outcomes.push_back(std::move(outcome));
      continue;
    }
    std::optional<Date> best;
    std::int64_t best_distance = 0;
    for (const auto& flag : flags) {
      if (flag.country != event.country) continue;
      const std::int64_t distance = std::llabs(flag.date - event.date);
      if (distance > tolerance_days) continue;
      if (!best || distance < best_distance ||
          (distance == best_distance && flag.date < *best)) {
        best = flag.date;
        best_distance = distance;
      }
    }
    if (best) {
      outcome.status = EventStatus::kDetected;
      outcome.matched_flag = best;
      ++card.detected;
    } else {
      outcome.status = EventStatus::kMissed;
      ++card.missed;
    }
    card.outcomes.push_back(std::move(outcome));
  }
  return card;
}

}  // namespace usagewatch
