#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "makesense/common/error.hpp"
#include "makesense/secure/psk.hpp"

namespace makesense::eggsim {

MAKESENSE_DEFINE_ERROR(ConfigError, Error);

/// Per-device settings, flashed as a flat key=value file.
struct EggConfig {
  std::string egg_id;
  std::string server_host = "127.0.0.1";
  int server_port = 5684;
  std::string psk_id;
  std::string psk_key;  // 32 hex digits
  int sample_interval_ms = 1000;
  std::vector<int> enabled_sensors;
  std::string room;
  double proximity_clamp_cm = 150;
  std::string wifi_ssid;  // carried for parity with the device image, unused
  std::string wifi_pass;

  /// Throws ConfigError on any broken invariant.
  void validate() const;
  secure::PskIdentity identity() const;
};

/// The seven on-board sensor objects.
std::vector<int> default_sensors();

/// Parses "key = value" lines; '#' comments and blank lines are skipped.
/// enabled_sensors takes object ids or names ("temperature,3304").
EggConfig parse_egg_config(std::string_view text);
std::string format_egg_config(const EggConfig& c);

}  // namespace makesense::eggsim
