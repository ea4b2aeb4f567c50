#pragma once

#include <map>
#include <optional>
#include <string>

namespace makesense::analytics {

struct PresenceEstimate {
  std::string band;
  std::optional<std::string> nearest_egg;  // set only while present
  std::map<std::string, double> smoothed;  // egg -> EWMA of RSSI (dBm)
  bool present = false;
};

/// Rough localization: per (band, egg) exponential moving average of the
/// beacon RSSI; the band is at the egg with the strongest smoothed signal.
class PresenceTracker {
 public:
  struct Options {
    double alpha = 0.3;
    double threshold_dbm = -85.0;
  };

  PresenceTracker() : PresenceTracker(Options{}) {}
  explicit PresenceTracker(Options options);

  const PresenceEstimate& update(const std::string& band, const std::string& egg, double rssi_dbm);
  std::optional<PresenceEstimate> estimate(const std::string& band) const;

 private:
  Options options_;
  std::map<std::string, PresenceEstimate> bands_;
};

}  // namespace makesense::analytics
