#include "makesense/analytics/comfort.hpp"

#include <cmath>

#include "json.hpp"
#include "makesense/lwm2m/records.hpp"

namespace makesense::analytics {

const char* to_string(Variable v) {
  switch (v) {
    case Variable::Temperature: return "temperature";
    case Variable::Humidity: return "humidity";
    case Variable::Light: return "light";
    case Variable::Dust: return "dust";
  }
  return "?";
}

std::optional<Variable> variable_from_string(std::string_view s) {
  for (auto v : {Variable::Temperature, Variable::Humidity, Variable::Light, Variable::Dust})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

std::optional<Variable> variable_for_object(int object_id) {
  switch (object_id) {
    case 3303: return Variable::Temperature;
    case 3304: return Variable::Humidity;
    case 3301: return Variable::Light;
    case 3325: return Variable::Dust;
    default: return std::nullopt;
  }
}

int object_for(Variable v) {
  switch (v) {
    case Variable::Temperature: return 3303;
    case Variable::Humidity: return 3304;
    case Variable::Light: return 3301;
    case Variable::Dust: return 3325;
  }
  return 0;
}

std::optional<double> ComfortPreference::target(Variable v) const {
  switch (v) {
    case Variable::Temperature: return temperature;
    case Variable::Humidity: return humidity;
    case Variable::Light: return light;
    case Variable::Dust: return dust;
  }
  return std::nullopt;
}

std::string remediation_message(const ComfortEvent& e) {
  const bool high = e.measured > e.target;
  const std::string now = lwm2m::format_number(e.measured);
  const std::string want = lwm2m::format_number(e.target);
  switch (e.variable) {
    case Variable::Temperature:
      return "Temperature at " + e.desk + " is " + now + " C (target " + want + " C). " +
             (high ? "Consider opening a window or lowering the air conditioning." : "Consider closing windows or raising the heating.");
    case Variable::Humidity:
      return "Humidity at " + e.desk + " is " + now + " %RH (target " + want + " %RH). " +
             (high ? "Consider ventilating the room." : "Consider a humidifier.");
    case Variable::Light:
      return "Light at " + e.desk + " is " + now + " (target " + want + "). " +
             (high ? "Consider closing the blinds." : "Consider switching on a desk lamp.");
    case Variable::Dust:
      return "Dust at " + e.desk + " is " + now + " (target " + want + "). Consider ventilating the room.";
  }
  return {};
}

ComfortEngine::ComfortEngine(ComfortConfig config) : config_(std::move(config)) {
  for (const auto& [v, tol] : config_.tolerance)
    if (!(tol > 0)) throw Error(std::string("tolerance for ") + to_string(v) + " must be positive");
  if (config_.debounce < 1) throw Error("debounce must be at least 1");
}

void ComfortEngine::set_preference(ComfortPreference pref) {
  if (pref.desk.empty()) throw Error("preference without desk");
  std::lock_guard lock(mu_);
  auto& d = desks_[pref.desk];
  d.pref = std::move(pref);
  d.streak.clear();
}

ComfortPreference ComfortEngine::preference(const std::string& desk) const {
  std::lock_guard lock(mu_);
  auto it = desks_.find(desk);
  if (it == desks_.end()) throw StalePreference("no preference for desk " + desk);
  return it->second.pref;
}

std::vector<ComfortPreference> ComfortEngine::preferences() const {
  std::lock_guard lock(mu_);
  std::vector<ComfortPreference> out;
  for (const auto& [desk, d] : desks_) out.push_back(d.pref);
  return out;
}

void ComfortEngine::start(const std::string& desk) {
  std::lock_guard lock(mu_);
  auto it = desks_.find(desk);
  if (it == desks_.end()) throw StalePreference("no preference for desk " + desk);
  it->second.monitoring = true;
  it->second.streak.clear();
}

void ComfortEngine::stop(const std::string& desk) {
  std::lock_guard lock(mu_);
  auto it = desks_.find(desk);
  if (it == desks_.end()) throw StalePreference("no preference for desk " + desk);
  it->second.monitoring = false;
  it->second.streak.clear();
}

bool ComfortEngine::monitoring(const std::string& desk) const {
  std::lock_guard lock(mu_);
  auto it = desks_.find(desk);
  return it != desks_.end() && it->second.monitoring;
}

bool ComfortEngine::occupied_locked(const DeskState& d, TimePoint t) const {
  if (!d.proximity) return false;
  const auto& [cm, at] = *d.proximity;
  return cm < config_.occupancy_cm && t >= at && t - at <= config_.freshness;
}

bool ComfortEngine::occupied(const std::string& desk, TimePoint t) const {
  std::lock_guard lock(mu_);
  auto it = desks_.find(desk);
  return it != desks_.end() && occupied_locked(it->second, t);
}

std::vector<ComfortEvent> ComfortEngine::on_reading(const std::string& desk, int object_id, double value, TimePoint t) {
  std::vector<ComfortEvent> out;
  std::lock_guard lock(mu_);
  auto it = desks_.find(desk);
  if (it == desks_.end()) return out;
  DeskState& d = it->second;
  if (object_id == kProximityObject) {
    d.proximity = {value, t};
    return out;
  }
  const auto var = variable_for_object(object_id);
  if (!var) return out;
  const auto target = d.pref.target(*var);
  if (!d.monitoring || !target || !occupied_locked(d, t)) {
    d.streak[*var] = 0;
    return out;
  }
  const double tol = config_.tolerance.at(*var);
  if (!(std::abs(value - *target) > tol)) {
    d.streak[*var] = 0;
    return out;
  }
  const int streak = ++d.streak[*var];
  if (streak < config_.debounce) return out;
  auto last = d.last_fired.find(*var);
  if (last != d.last_fired.end() && t - last->second < config_.cooldown) return out;
  d.last_fired[*var] = t;
  ComfortEvent e{desk, *var, value, *target, t, true, {}};
  e.email_record = d.pref.email;
  out.push_back(std::move(e));
  return out;
}

NotificationSink::NotificationSink(std::optional<std::filesystem::path> file) {
  if (file) {
    if (file->has_parent_path()) std::filesystem::create_directories(file->parent_path());
    out_.emplace(*file, std::ios::app);
    if (!*out_) throw Error("cannot open notification sink " + file->string());
  }
}

void NotificationSink::add(const ComfortEvent& e) {
  nlohmann::json j{{"fired_at", format_iso8601(e.fired_at)}, {"desk", e.desk},       {"variable", to_string(e.variable)},
                   {"measured", e.measured},                 {"target", e.target},   {"to", e.email_record},
                   {"message", remediation_message(e)}};
  std::string line = j.dump();
  std::lock_guard lock(mu_);
  if (out_) {
    *out_ << line << '\n';
    out_->flush();
  }
  lines_.push_back(std::move(line));
}

std::vector<std::string> NotificationSink::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

}  // namespace makesense::analytics
