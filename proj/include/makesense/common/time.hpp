#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace makesense {

using Duration = std::chrono::milliseconds;
using TimePoint = std::chrono::sys_time<Duration>;

using std::chrono::hours;
using std::chrono::milliseconds;
using std::chrono::minutes;
using std::chrono::seconds;

// Midnight UTC, 2018-06-01. Virtual runs start here so time-of-day phases begin at zero.
inline constexpr TimePoint kDefaultEpoch{Duration{1527811200000}};

inline constexpr double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
inline constexpr double to_unix_seconds(TimePoint t) { return to_seconds(t.time_since_epoch()); }

TimePoint from_unix_seconds(double seconds);
Duration from_seconds(double seconds);

/// Parses "250ms", "10s", "5m", "24h" or a bare number of seconds.
Duration parse_duration(std::string_view text);

/// "2018-06-01T00:00:03.250Z"
std::string format_iso8601(TimePoint t);

/// Accepts "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DDTHH:MM[:SS][Z]" or unix seconds.
TimePoint parse_timestamp(std::string_view text);

/// Fixed-point "1527811200.250" rendering of a millisecond timestamp (lossless).
std::string format_unix_seconds(TimePoint t);

}  // namespace makesense
