#include "makesense/eggsim/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "makesense/common/error.hpp"
#include "makesense/common/random.hpp"
#include "makesense/lwm2m/catalog.hpp"

namespace makesense::eggsim {

SignalModel default_model(int object_id) {
  const auto* spec = lwm2m::find_object(object_id);
  if (!spec || !spec->sensor) throw Error("no signal model for object " + std::to_string(object_id));
  SignalModel m;
  m.lo = spec->min_value;
  m.hi = spec->max_value;
  switch (object_id) {
    case 3301: m.baseline = 250; m.amplitude = 250; m.environment_sigma = 15; m.measurement_sigma = 2; break;
    case 3303: m.baseline = 21; m.amplitude = 2; m.environment_sigma = 0.2; m.measurement_sigma = 0.05; break;
    case 3304: m.baseline = 45; m.amplitude = -8; m.environment_sigma = 1.0; m.measurement_sigma = 0.2; break;
    case 3305: m.baseline = 0; break;
    case 3324: m.baseline = 38; m.amplitude = 8; m.environment_sigma = 3; m.measurement_sigma = 0.5; break;
    case 3325: m.baseline = 18; m.amplitude = 4; m.environment_sigma = 2; m.measurement_sigma = 0.3; break;
    case 3330: m.baseline = m.hi; break;  // nobody in range reads as the sensor's ceiling
    case 3348: m.baseline = 1; m.amplitude = 1; m.environment_sigma = 0.6; m.integer = true; break;
    case 27000: m.baseline = kRssiAtOneMetre; break;
    default: break;
  }
  return m;
}

double sample(const SignalModel& m, int object_id, TimePoint t, NoiseKeys keys) {
  const auto ms = t.time_since_epoch().count();
  const double day_s = static_cast<double>(((ms % 86400000) + 86400000) % 86400000) / 1000.0;
  double v = m.baseline + m.amplitude * std::sin(2 * std::numbers::pi * day_s / 86400.0);
  const auto tkey = mix64(static_cast<std::uint64_t>(object_id), static_cast<std::uint64_t>(ms));
  if (m.environment_sigma > 0) v += m.environment_sigma * keyed_gaussian(mix64(keys.environment, tkey));
  if (m.measurement_sigma > 0) v += m.measurement_sigma * keyed_gaussian(mix64(keys.measurement, tkey));
  for (const auto& p : m.pulses) {
    if (!p.active(t)) continue;
    if (p.mode == Pulse::Mode::Set)
      v = p.value;
    else
      v += p.value;
  }
  if (m.integer) v = std::round(v);
  return std::clamp(v, m.lo, m.hi);
}

double room_distance(const Room& a, const Room& b) {
  if (a.name == b.name) return 1.0;
  return std::max(1.0, std::hypot(a.x - b.x, a.y - b.y));
}

double rssi_at(double distance_m, double sigma, std::uint64_t key) {
  double v = kRssiAtOneMetre - 10.0 * kPathLossExponent * std::log10(distance_m);
  if (sigma > 0) v += sigma * keyed_gaussian(key);
  return v;
}

double appliance_power(const std::string& profile, TimePoint t, std::uint64_t seed) {
  const auto ms = t.time_since_epoch().count();
  const double s = static_cast<double>(ms) / 1000.0;
  const double day_s = std::fmod(s, 86400.0);
  const double jitter = keyed_gaussian(mix64(seed, static_cast<std::uint64_t>(ms)));
  if (profile == "fridge") {
    // Compressor runs 20 of every 45 minutes.
    const double phase = std::fmod(s + static_cast<double>(seed % 2700), 2700.0);
    return std::max(0.0, (phase < 1200 ? 95.0 : 2.0) + 1.5 * jitter);
  }
  if (profile == "kettle") {
    // A few boils a day, about three minutes each.
    const std::int64_t slot = ms / 1800000;
    const bool used = (mix64(seed, static_cast<std::uint64_t>(slot)) % 8) == 0;
    const double into = std::fmod(s, 1800.0);
    return used && into < 180 ? std::max(0.0, 2200.0 + 20.0 * jitter) : 0.0;
  }
  if (profile == "tv") {
    const bool evening = day_s >= 18 * 3600 && day_s < 23 * 3600;
    return evening ? std::max(0.0, 110.0 + 5.0 * jitter) : 0.5;
  }
  if (profile == "washing") {
    const std::int64_t slot = ms / 7200000;
    const bool used = (mix64(seed, static_cast<std::uint64_t>(slot)) % 6) == 0;
    const double into = std::fmod(s, 7200.0);
    if (!used || into >= 5400) return 0.0;
    return std::max(0.0, (into < 900 ? 1900.0 : 250.0) + 30.0 * jitter);
  }
  if (profile == "aggregate") {
    return std::max(0.0, 180.0 + 120.0 * std::sin(2 * std::numbers::pi * day_s / 86400.0) + 15.0 * jitter);
  }
  throw Error("unknown appliance profile '" + profile + "'");
}

}  // namespace makesense::eggsim
