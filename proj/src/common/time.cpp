#include "makesense/common/time.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "makesense/common/error.hpp"

namespace makesense {

TimePoint from_unix_seconds(double seconds) { return TimePoint{from_seconds(seconds)}; }

Duration from_seconds(double seconds) { return Duration{std::llround(seconds * 1000.0)}; }

namespace {

bool parse_number(std::string_view text, double& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

template <class Int>
bool parse_int(std::string_view text, Int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

Duration parse_duration(std::string_view text) {
  struct Suffix {
    std::string_view name;
    double scale_ms;
  };
  static constexpr Suffix kSuffixes[] = {{"ms", 1.0}, {"s", 1000.0}, {"m", 60000.0}, {"h", 3600000.0}, {"d", 86400000.0}};
  for (const auto& s : kSuffixes) {
    if (text.size() > s.name.size() && text.ends_with(s.name)) {
      const auto number = text.substr(0, text.size() - s.name.size());
      double v = 0;
      // "5ms" also ends with "s"; the table order checks "ms" first.
      if (parse_number(number, v) && v >= 0) return Duration{std::llround(v * s.scale_ms)};
    }
  }
  double v = 0;
  if (parse_number(text, v) && v >= 0) return from_seconds(v);
  throw Error("invalid duration: " + std::string(text));
}

std::string format_iso8601(TimePoint t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto tod = t - day;
  const auto h = duration_cast<hours>(tod);
  const auto m = duration_cast<minutes>(tod - h);
  const auto s = duration_cast<seconds>(tod - h - m);
  const auto ms = tod - h - m - s;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                static_cast<int>(m.count()), static_cast<int>(s.count()), static_cast<int>(ms.count()));
  return buf;
}

TimePoint parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  double unix_s = 0;
  if (parse_number(text, unix_s)) return from_unix_seconds(unix_s);

  auto bad = [&] { return Error("invalid timestamp: " + std::string(text)); };
  if (text.ends_with('Z')) text.remove_suffix(1);
  if (text.size() < 16 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':')
    throw bad();
  int y = 0;
  unsigned mo = 0, d = 0;
  int hh = 0, mm = 0;
  double ss = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), mo) || !parse_int(text.substr(8, 2), d) ||
      !parse_int(text.substr(11, 2), hh) || !parse_int(text.substr(14, 2), mm))
    throw bad();
  if (text.size() > 16) {
    if (text[16] != ':' || !parse_number(text.substr(17), ss)) throw bad();
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss < 0 || ss >= 61) throw bad();
  return TimePoint{sys_days{ymd}.time_since_epoch() + hours{hh} + minutes{mm} + from_seconds(ss)};
}

std::string format_unix_seconds(TimePoint t) {
  const auto ms = t.time_since_epoch().count();
  const auto whole = ms >= 0 ? ms / 1000 : -((-ms + 999) / 1000);
  const auto frac = ms - whole * 1000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(whole), static_cast<long long>(frac));
  return buf;
}

}  // namespace makesense
