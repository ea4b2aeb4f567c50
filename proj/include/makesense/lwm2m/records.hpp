#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "makesense/common/time.hpp"
#include "makesense/lwm2m/path.hpp"

namespace makesense::lwm2m {

MAKESENSE_DEFINE_ERROR(BadPayload, Lwm2mError);

using Value = std::variant<double, std::string>;

std::string value_to_string(const Value& v);

/// One entry of the JSON measurement payload: {"n": path, "v": number | "sv": string, "t": unix seconds}.
struct Record {
  std::string name;
  Value value;
  std::optional<TimePoint> time;

  bool operator==(const Record&) const = default;
};

std::string encode_records(const std::vector<Record>& records);
/// Throws BadPayload on anything other than a well-formed record list.
std::vector<Record> decode_records(std::string_view json);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

}  // namespace makesense::lwm2m
