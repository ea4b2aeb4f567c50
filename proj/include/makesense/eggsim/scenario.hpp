#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "makesense/eggsim/config.hpp"
#include "makesense/eggsim/signal.hpp"

namespace makesense::eggsim {

struct EnergyChannel {
  std::string name;
  std::string profile;  // fridge, kettle, tv, washing, aggregate
};

struct SiteSpec {
  std::string site_id;
  int egg_count = 0;
  std::vector<Room> rooms;
  std::vector<EnergyChannel> energy_channels;
};

/// Offsets are relative to the scenario start.
struct Stay {
  Duration from{0};
  Duration to{0};
  std::string room;
};

struct Wristband {
  std::string band_id;
  std::string site;
  std::vector<Stay> schedule;
};

struct OccupancyEpisode {
  std::string egg;  // endpoint
  Duration from{0};
  Duration to{0};
  double distance_cm = 50;
};

struct ScenarioSpec {
  enum class Kind { Home, Office };
  Kind kind = Kind::Office;
  std::uint64_t seed = 1;
  Duration duration{600000};
  int sample_interval_ms = 1000;
  int energy_interval_ms = 6000;
  double proximity_clamp_cm = 150;
  double rssi_sigma_db = 2.0;
  std::vector<SiteSpec> sites;
  std::vector<Wristband> wristbands;
  std::vector<OccupancyEpisode> occupancy;

  void validate() const;
  std::size_t egg_count() const;
};

const char* to_string(ScenarioSpec::Kind k);

/// JSON scenario file. Throws ConfigError.
ScenarioSpec parse_scenario(std::string_view json);
std::string format_scenario(const ScenarioSpec& s);

/// Office: one site, eggs "egg-1".."egg-N" on a 3 m desk grid.
ScenarioSpec office_scenario(int eggs = 100, int interval_ms = 1000, Duration duration = minutes(10));
/// Homes: "household-01".. with 13-22 eggs each, rooms and energy channels drawn from the seed.
ScenarioSpec home_scenario(int sites = 20, std::uint64_t seed = 1, Duration duration = hours(1));
/// Controlled environment: every egg in one room, sharing its environment.
ScenarioSpec colocated_scenario(int eggs = 8, int interval_ms = 10000, Duration duration = hours(24));
/// One home with five rooms and a wristband walking through them.
ScenarioSpec walk_scenario(std::uint64_t seed = 1, Duration dwell = minutes(10), double sigma_db = 2.0);

/// Endpoint names as the fleet registers them.
std::string egg_endpoint(const ScenarioSpec& s, const SiteSpec& site, int index);
std::string hub_endpoint(const SiteSpec& site);

struct Fault {
  enum class Kind { Crash, Silent, Bias };
  Kind kind = Kind::Crash;
  std::string egg;
  Duration at{0};
  /// Crash: watchdog restart delay; nullopt leaves the device down.
  std::optional<Duration> restart_after;
  /// Silent/Bias: affected sensor and end of the window (nullopt = forever).
  int object_id = 0;
  std::optional<Duration> until;
  double offset = 0;
};

struct FaultPlan {
  std::vector<Fault> faults;
};

FaultPlan parse_fault_plan(std::string_view json);
/// "egg-3:temp:+2" style bias shorthand used on the command line.
Fault parse_bias(std::string_view spec);

}  // namespace makesense::eggsim
