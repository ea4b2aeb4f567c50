#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "makesense/datastore/store.hpp"

namespace makesense::datastore {

class BadCsv : public Error {
 public:
  BadCsv(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Splits one CSV line; fields may be double-quoted with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_field(std::string_view s);

inline constexpr std::string_view kExportHeader =
    "pseudonym,endpoint,object,instance,resource,value,unit,device_time,server_time";

/// Header plus one row per reading; values and timestamps round-trip exactly.
void write_export_csv(std::ostream& out, const std::vector<SensorReading>& readings);
/// Inverse of write_export_csv (site is not part of the export and stays empty).
std::vector<SensorReading> read_export_csv(std::istream& in);
/// Writes the rows of `args` to `file`; returns the row count. Throws IoError.
std::size_t export_csv(const HistoricalStore& store, const QueryArgs& args, const std::filesystem::path& file);

}  // namespace makesense::datastore
