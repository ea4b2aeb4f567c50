#pragma once

#include <optional>
#include <string>
#include <vector>

#include "makesense/common/time.hpp"

namespace makesense::eggsim {

/// Additive or overriding excursion on one sensor, e.g. a kettle boil or a
/// person sitting at the desk.
struct Pulse {
  enum class Mode { Add, Set };
  TimePoint from;
  TimePoint to;  // exclusive
  double value = 0;
  Mode mode = Mode::Add;

  bool active(TimePoint t) const { return t >= from && t < to; }
};

/// value(t) = baseline + amplitude * sin(2 pi s / 86400) + noise + pulses, clamped,
/// where s is seconds since UTC midnight. Noise is the sum of an environment
/// term keyed by `environment_seed` (shared by co-located eggs) and a
/// measurement term keyed by the egg's own seed.
struct SignalModel {
  double baseline = 0;
  double amplitude = 0;
  double environment_sigma = 0;
  double measurement_sigma = 0;
  double lo = -1e300;
  double hi = 1e300;
  bool integer = false;
  std::vector<Pulse> pulses;
};

/// Defaults per IPSO object id; throws Error for objects that are not sensors.
SignalModel default_model(int object_id);

struct NoiseKeys {
  std::uint64_t environment = 0;
  std::uint64_t measurement = 0;
};

double sample(const SignalModel& model, int object_id, TimePoint t, NoiseKeys keys);

struct Room {
  std::string name;
  double x = 0;
  double y = 0;
};

inline constexpr double kRssiAtOneMetre = -45.0;
inline constexpr double kPathLossExponent = 2.5;

/// Distance in metres between two rooms; 1 m within the same room.
double room_distance(const Room& a, const Room& b);

/// RSSI = -45 - 10 n log10(d) + N(0, sigma), with the deviate keyed by `key`.
double rssi_at(double distance_m, double sigma, std::uint64_t key);

/// Power draw profiles for energy channels, in watts.
double appliance_power(const std::string& profile, TimePoint t, std::uint64_t seed);

}  // namespace makesense::eggsim
