#include "makesense/datastore/csv.hpp"

#include <charconv>
#include <fstream>

#include "makesense/lwm2m/records.hpp"

namespace makesense::datastore {

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error("unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_export_csv(std::ostream& out, const std::vector<SensorReading>& readings) {
  out << kExportHeader << '\n';
  for (const auto& r : readings) {
    out << csv_field(r.pseudonym) << ',' << csv_field(r.endpoint) << ',' << r.object_id << ',' << r.instance << ','
        << r.resource << ',' << lwm2m::format_number(r.value) << ',' << csv_field(r.unit) << ','
        << format_unix_seconds(r.device_time) << ',' << format_unix_seconds(r.server_time) << '\n';
  }
}

namespace {

template <class T>
T parse_field(const std::string& s, std::size_t line, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw BadCsv(line, std::string("bad ") + what + " '" + s + "'");
  return v;
}

// "1527811200.250" -> exact milliseconds, without a round trip through double.
TimePoint parse_fixed_seconds(const std::string& s, std::size_t line) {
  const auto dot = s.find('.');
  const std::string whole = s.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
  if (frac.size() > 3) throw BadCsv(line, "timestamp finer than milliseconds '" + s + "'");
  frac.resize(3, '0');
  const bool negative = !whole.empty() && whole[0] == '-';
  const auto secs = parse_field<std::int64_t>(whole, line, "timestamp");
  const auto ms = parse_field<std::int64_t>(frac, line, "timestamp");
  return TimePoint{Duration{secs * 1000 + (negative ? -ms : ms)}};
}

}  // namespace

std::vector<SensorReading> read_export_csv(std::istream& in) {
  std::vector<SensorReading> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw BadCsv(1, "empty export");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kExportHeader) throw BadCsv(1, "unexpected header");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const Error& e) {
      throw BadCsv(line_no, e.what());
    }
    if (f.size() != 9) throw BadCsv(line_no, "expected 9 columns");
    SensorReading r;
    r.pseudonym = f[0];
    r.endpoint = f[1];
    r.object_id = parse_field<int>(f[2], line_no, "object");
    r.instance = parse_field<int>(f[3], line_no, "instance");
    r.resource = parse_field<int>(f[4], line_no, "resource");
    r.value = parse_field<double>(f[5], line_no, "value");
    r.unit = f[6];
    r.device_time = parse_fixed_seconds(f[7], line_no);
    r.server_time = parse_fixed_seconds(f[8], line_no);
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t export_csv(const HistoricalStore& store, const QueryArgs& args, const std::filesystem::path& file) {
  const auto rows = store.query(args);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  write_export_csv(out, rows);
  out.flush();
  if (!out) throw IoError("write failed for " + file.string());
  return rows.size();
}

}  // namespace makesense::datastore
