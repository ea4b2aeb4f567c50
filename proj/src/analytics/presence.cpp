#include "makesense/analytics/presence.hpp"

#include "makesense/common/error.hpp"

namespace makesense::analytics {

PresenceTracker::PresenceTracker(Options options) : options_(options) {
  if (!(options_.alpha > 0 && options_.alpha <= 1)) throw Error("EWMA alpha must be in (0, 1]");
}

const PresenceEstimate& PresenceTracker::update(const std::string& band, const std::string& egg, double rssi) {
  auto& est = bands_[band];
  est.band = band;
  auto [it, fresh] = est.smoothed.try_emplace(egg, rssi);
  if (!fresh) it->second = options_.alpha * rssi + (1 - options_.alpha) * it->second;

  const std::pair<const std::string, double>* best = nullptr;
  for (const auto& kv : est.smoothed)
    if (!best || kv.second > best->second) best = &kv;
  est.present = best && best->second > options_.threshold_dbm;
  est.nearest_egg = est.present ? std::optional<std::string>(best->first) : std::nullopt;
  return est;
}

std::optional<PresenceEstimate> PresenceTracker::estimate(const std::string& band) const {
  auto it = bands_.find(band);
  if (it == bands_.end()) return std::nullopt;
  return it->second;
}

}  // namespace makesense::analytics
