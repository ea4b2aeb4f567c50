#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "makesense/common/error.hpp"
#include "makesense/common/time.hpp"

namespace makesense::analytics {

MAKESENSE_DEFINE_ERROR(StalePreference, Error);

enum class Variable { Temperature, Humidity, Light, Dust };

const char* to_string(Variable v);
std::optional<Variable> variable_from_string(std::string_view s);
std::optional<Variable> variable_for_object(int object_id);
int object_for(Variable v);

inline constexpr int kProximityObject = 3330;

/// What the dashboard form collects: a desk, up to four targets and an email.
struct ComfortPreference {
  std::string desk;
  std::optional<double> temperature;
  std::optional<double> humidity;
  std::optional<double> light;
  std::optional<double> dust;
  std::string email;

  std::optional<double> target(Variable v) const;
};

struct ComfortConfig {
  double occupancy_cm = 75.0;  // occupied strictly below
  Duration freshness{10000};
  int debounce = 3;
  Duration cooldown{600000};
  std::map<Variable, double> tolerance{
      {Variable::Temperature, 2.0}, {Variable::Humidity, 10.0}, {Variable::Light, 150.0}, {Variable::Dust, 10.0}};
};

struct ComfortEvent {
  std::string desk;
  Variable variable = Variable::Temperature;
  double measured = 0;
  double target = 0;
  TimePoint fired_at;
  bool buzzer_executed = false;
  std::string email_record;

  bool operator==(const ComfortEvent&) const = default;
};

std::string remediation_message(const ComfortEvent& e);

/// Office comfort rules. A desk is occupied when its latest proximity reading
/// is below the threshold and no older than the freshness window. A variable
/// fires after `debounce` consecutive occupied out-of-band samples, then stays
/// quiet for the cooldown. Deterministic in its inputs.
class ComfortEngine {
 public:
  explicit ComfortEngine(ComfortConfig config = {});

  void set_preference(ComfortPreference pref);
  ComfortPreference preference(const std::string& desk) const;
  std::vector<ComfortPreference> preferences() const;
  /// Throws StalePreference for unknown desks.
  void start(const std::string& desk);
  void stop(const std::string& desk);
  bool monitoring(const std::string& desk) const;

  /// Feeds one reading of a desk's egg; returns the events it fires.
  std::vector<ComfortEvent> on_reading(const std::string& desk, int object_id, double value, TimePoint t);

  bool occupied(const std::string& desk, TimePoint t) const;
  const ComfortConfig& config() const { return config_; }

 private:
  struct DeskState {
    ComfortPreference pref;
    bool monitoring = false;
    std::optional<std::pair<double, TimePoint>> proximity;
    std::map<Variable, int> streak;
    std::map<Variable, TimePoint> last_fired;
  };

  bool occupied_locked(const DeskState& d, TimePoint t) const;

  ComfortConfig config_;
  mutable std::mutex mu_;
  std::map<std::string, DeskState> desks_;
};

/// Append-only JSONL file of fired events standing in for outgoing mail.
class NotificationSink {
 public:
  explicit NotificationSink(std::optional<std::filesystem::path> file = std::nullopt);
  void add(const ComfortEvent& e);
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::ofstream> out_;
  std::vector<std::string> lines_;
};

}  // namespace makesense::analytics
