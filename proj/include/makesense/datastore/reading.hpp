#pragma once

#include <string>
#include <string_view>

#include "makesense/common/error.hpp"
#include "makesense/common/time.hpp"

namespace makesense::datastore {

MAKESENSE_DEFINE_ERROR(DecodeError, Error);

/// One pseudonymized measurement of one resource on one device.
struct SensorReading {
  std::string pseudonym;  // token standing for the device's full raw identity
  std::string site;       // token standing for the raw site identity
  std::string endpoint;   // device name within its site
  int object_id = 0;
  int instance = 0;
  int resource = 0;
  double value = 0;
  std::string unit;
  TimePoint device_time;
  TimePoint server_time;

  bool operator==(const SensorReading&) const = default;
};

/// Compact binary form used on the live exchange.
std::string encode_reading(const SensorReading& r);
SensorReading decode_reading(std::string_view bytes);

}  // namespace makesense::datastore
