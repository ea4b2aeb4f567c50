#include "makesense/eggsim/scenario.hpp"

#include <cstdio>
#include <set>

#include "json.hpp"
#include "makesense/common/random.hpp"

namespace makesense::eggsim {

using nlohmann::json;

const char* to_string(ScenarioSpec::Kind k) { return k == ScenarioSpec::Kind::Home ? "home" : "office"; }

std::size_t ScenarioSpec::egg_count() const {
  std::size_t n = 0;
  for (const auto& s : sites) n += static_cast<std::size_t>(s.egg_count);
  return n;
}

void ScenarioSpec::validate() const {
  if (sites.empty()) throw ConfigError("scenario has no sites");
  if (sample_interval_ms < 100) throw ConfigError("sample_interval_ms must be at least 100");
  if (energy_interval_ms < 100) throw ConfigError("energy_interval_ms must be at least 100");
  if (duration <= Duration::zero()) throw ConfigError("duration must be positive");
  if (!(proximity_clamp_cm > 0 && proximity_clamp_cm <= 150)) throw ConfigError("proximity_clamp_cm must be in (0, 150]");
  if (rssi_sigma_db < 0) throw ConfigError("rssi_sigma_db must be non-negative");
  std::set<std::string> ids;
  for (const auto& s : sites) {
    if (s.site_id.empty() || s.site_id.find_first_of(":./# \t") != std::string::npos)
      throw ConfigError("bad site id '" + s.site_id + "'");
    if (!ids.insert(s.site_id).second) throw ConfigError("duplicate site id " + s.site_id);
    if (kind == Kind::Home && (s.egg_count < 13 || s.egg_count > 22))
      throw ConfigError("home site " + s.site_id + " must have 13 to 22 eggs");
    if (s.egg_count < 1) throw ConfigError("site " + s.site_id + " has no eggs");
    if (s.rooms.empty()) throw ConfigError("site " + s.site_id + " has no rooms");
    for (const auto& ch : s.energy_channels)
      if (ch.name.empty()) throw ConfigError("energy channel without a name at " + s.site_id);
  }
  for (const auto& b : wristbands) {
    auto site = std::find_if(sites.begin(), sites.end(), [&](const SiteSpec& s) { return s.site_id == b.site; });
    if (site == sites.end()) throw ConfigError("wristband " + b.band_id + " at unknown site " + b.site);
    for (const auto& st : b.schedule) {
      if (st.to <= st.from) throw ConfigError("empty stay for " + b.band_id);
      if (std::none_of(site->rooms.begin(), site->rooms.end(), [&](const Room& r) { return r.name == st.room; }))
        throw ConfigError("wristband " + b.band_id + " visits unknown room " + st.room);
    }
  }
  for (const auto& e : occupancy) {
    if (e.to <= e.from) throw ConfigError("empty occupancy episode for " + e.egg);
    if (e.distance_cm <= 0) throw ConfigError("occupancy distance must be positive");
  }
}

std::string egg_endpoint(const ScenarioSpec& s, const SiteSpec& site, int index) {
  const std::string name = "egg-" + std::to_string(index);
  return s.kind == ScenarioSpec::Kind::Home ? site.site_id + ":" + name : name;
}

std::string hub_endpoint(const SiteSpec& site) { return site.site_id + ":hub"; }

namespace {

Duration seconds_field(const json& j, const char* key, Duration fallback) {
  if (!j.contains(key)) return fallback;
  return from_seconds(j.at(key).get<double>());
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view text) {
  ScenarioSpec s;
  try {
    const json j = json::parse(text);
    const std::string kind = j.value("kind", "office");
    if (kind == "home") s.kind = ScenarioSpec::Kind::Home;
    else if (kind == "office") s.kind = ScenarioSpec::Kind::Office;
    else throw ConfigError("unknown scenario kind " + kind);
    s.seed = j.value("seed", std::uint64_t{1});
    s.duration = seconds_field(j, "duration_s", s.duration);
    s.sample_interval_ms = j.value("sample_interval_ms", s.kind == ScenarioSpec::Kind::Home ? 3000 : 1000);
    s.energy_interval_ms = j.value("energy_interval_ms", 6000);
    s.proximity_clamp_cm = j.value("proximity_clamp_cm", 150.0);
    s.rssi_sigma_db = j.value("rssi_sigma_db", 2.0);
    for (const auto& js : j.at("sites")) {
      SiteSpec site;
      site.site_id = js.at("site_id").get<std::string>();
      site.egg_count = js.at("egg_count").get<int>();
      if (js.contains("rooms"))
        for (const auto& r : js.at("rooms")) site.rooms.push_back({r.at("name"), r.value("x", 0.0), r.value("y", 0.0)});
      else
        site.rooms.push_back({"main", 0, 0});
      if (js.contains("energy_channels"))
        for (const auto& c : js.at("energy_channels"))
          site.energy_channels.push_back({c.at("name").get<std::string>(), c.value("profile", "aggregate")});
      s.sites.push_back(std::move(site));
    }
    if (j.contains("wristbands"))
      for (const auto& jb : j.at("wristbands")) {
        Wristband b;
        b.band_id = jb.at("band_id").get<std::string>();
        b.site = jb.at("site").get<std::string>();
        for (const auto& st : jb.at("schedule"))
          b.schedule.push_back({seconds_field(st, "from_s", {}), seconds_field(st, "to_s", {}), st.at("room")});
        s.wristbands.push_back(std::move(b));
      }
    if (j.contains("occupancy"))
      for (const auto& je : j.at("occupancy"))
        s.occupancy.push_back({je.at("egg").get<std::string>(), seconds_field(je, "from_s", {}),
                               seconds_field(je, "to_s", {}), je.value("distance_cm", 50.0)});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

std::string format_scenario(const ScenarioSpec& s) {
  json j{{"kind", to_string(s.kind)},
         {"seed", s.seed},
         {"duration_s", to_seconds(s.duration)},
         {"sample_interval_ms", s.sample_interval_ms},
         {"energy_interval_ms", s.energy_interval_ms},
         {"proximity_clamp_cm", s.proximity_clamp_cm},
         {"rssi_sigma_db", s.rssi_sigma_db}};
  json sites = json::array();
  for (const auto& site : s.sites) {
    json rooms = json::array();
    for (const auto& r : site.rooms) rooms.push_back({{"name", r.name}, {"x", r.x}, {"y", r.y}});
    json channels = json::array();
    for (const auto& c : site.energy_channels) channels.push_back({{"name", c.name}, {"profile", c.profile}});
    sites.push_back({{"site_id", site.site_id}, {"egg_count", site.egg_count}, {"rooms", rooms},
                     {"energy_channels", channels}});
  }
  j["sites"] = sites;
  json bands = json::array();
  for (const auto& b : s.wristbands) {
    json sched = json::array();
    for (const auto& st : b.schedule)
      sched.push_back({{"from_s", to_seconds(st.from)}, {"to_s", to_seconds(st.to)}, {"room", st.room}});
    bands.push_back({{"band_id", b.band_id}, {"site", b.site}, {"schedule", sched}});
  }
  j["wristbands"] = bands;
  json occ = json::array();
  for (const auto& e : s.occupancy)
    occ.push_back({{"egg", e.egg}, {"from_s", to_seconds(e.from)}, {"to_s", to_seconds(e.to)},
                   {"distance_cm", e.distance_cm}});
  j["occupancy"] = occ;
  return j.dump(2);
}

ScenarioSpec office_scenario(int eggs, int interval_ms, Duration duration) {
  ScenarioSpec s;
  s.kind = ScenarioSpec::Kind::Office;
  s.duration = duration;
  s.sample_interval_ms = interval_ms;
  SiteSpec site{"office", eggs, {}, {}};
  for (int i = 1; i <= eggs; ++i)
    site.rooms.push_back({"desk-" + std::to_string(i), 3.0 * ((i - 1) % 10), 3.0 * ((i - 1) / 10)});
  s.sites.push_back(std::move(site));
  s.validate();
  return s;
}

ScenarioSpec home_scenario(int sites, std::uint64_t seed, Duration duration) {
  static const Room kRooms[] = {{"kitchen", 0, 0},  {"living", 5, 0}, {"hall", 2.5, 4}, {"bedroom-1", 0, 8},
                                {"bedroom-2", 5, 8}, {"bathroom", 8, 4}, {"study", 9, 0}};
  static const char* kAppliances[] = {"fridge", "kettle", "tv", "washing"};
  ScenarioSpec s;
  s.kind = ScenarioSpec::Kind::Home;
  s.seed = seed;
  s.duration = duration;
  s.sample_interval_ms = 3000;
  for (int i = 1; i <= sites; ++i) {
    const std::uint64_t h = mix64(seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof id, "household-%02d", i);
    SiteSpec site{id, 13 + static_cast<int>(h % 10), {}, {}};
    const int rooms = 5 + static_cast<int>((h >> 8) % 3);
    site.rooms.assign(std::begin(kRooms), std::begin(kRooms) + rooms);
    site.energy_channels.push_back({"mains", "aggregate"});
    const int appliances = 2 + static_cast<int>((h >> 16) % 3);
    for (int a = 0; a < appliances; ++a) site.energy_channels.push_back({kAppliances[a], kAppliances[a]});
    s.sites.push_back(std::move(site));
  }
  s.validate();
  return s;
}

ScenarioSpec colocated_scenario(int eggs, int interval_ms, Duration duration) {
  ScenarioSpec s;
  s.kind = ScenarioSpec::Kind::Office;
  s.duration = duration;
  s.sample_interval_ms = interval_ms;
  s.sites.push_back({"lab", eggs, {{"chamber", 0, 0}}, {}});
  s.validate();
  return s;
}

ScenarioSpec walk_scenario(std::uint64_t seed, Duration dwell, double sigma_db) {
  ScenarioSpec s;
  s.kind = ScenarioSpec::Kind::Home;
  s.seed = seed;
  s.sample_interval_ms = 3000;
  s.rssi_sigma_db = sigma_db;
  SiteSpec site{"household-walk", 13, {{"kitchen", 0, 0}, {"living", 6, 0}, {"study", 12, 0}, {"bedroom", 0, 6},
                                        {"bathroom", 6, 6}}, {}};
  Wristband band{"band-1", site.site_id, {}};
  Duration t{0};
  for (const char* room : {"kitchen", "living", "study", "bathroom", "bedroom"}) {
    band.schedule.push_back({t, t + dwell, room});
    t += dwell;
  }
  s.duration = t;
  s.sites.push_back(std::move(site));
  s.wristbands.push_back(std::move(band));
  s.validate();
  return s;
}

namespace {

int object_from_name(const std::string& name) {
  static const std::pair<const char*, int> kNames[] = {
      {"temp", 3303},     {"temperature", 3303}, {"humidity", 3304}, {"light", 3301},    {"illuminance", 3301},
      {"loudness", 3324}, {"sound", 3324},       {"dust", 3325},     {"proximity", 3330}, {"distance", 3330},
      {"multistate", 3348}, {"power", 3305}};
  for (const auto& [n, id] : kNames)
    if (name == n) return id;
  try {
    std::size_t used = 0;
    const int id = std::stoi(name, &used);
    if (used == name.size()) return id;
  } catch (const std::exception&) {
  }
  throw ConfigError("unknown sensor '" + name + "'");
}

}  // namespace

FaultPlan parse_fault_plan(std::string_view text) {
  FaultPlan plan;
  try {
    const json j = json::parse(text);
    const json& list = j.is_array() ? j : j.at("faults");
    for (const auto& jf : list) {
      Fault f;
      const std::string kind = jf.at("kind").get<std::string>();
      if (kind == "crash") f.kind = Fault::Kind::Crash;
      else if (kind == "silent") f.kind = Fault::Kind::Silent;
      else if (kind == "bias") f.kind = Fault::Kind::Bias;
      else throw ConfigError("unknown fault kind " + kind);
      f.egg = jf.at("egg").get<std::string>();
      f.at = seconds_field(jf, "at_s", {});
      if (jf.contains("restart_after_s")) f.restart_after = seconds_field(jf, "restart_after_s", {});
      if (jf.contains("sensor")) {
        const auto& js = jf.at("sensor");
        f.object_id = js.is_number() ? js.get<int>() : object_from_name(js.get<std::string>());
      }
      if (jf.contains("until_s")) f.until = seconds_field(jf, "until_s", {});
      f.offset = jf.value("offset", 0.0);
      if (f.kind != Fault::Kind::Crash && f.object_id == 0) throw ConfigError("fault on " + f.egg + " needs a sensor");
      plan.faults.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fault plan: ") + e.what());
  }
  return plan;
}

Fault parse_bias(std::string_view spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string_view::npos ? a : spec.find(':', a + 1);
  if (b == std::string_view::npos) throw ConfigError("bias must look like egg-3:temp:+2");
  Fault f;
  f.kind = Fault::Kind::Bias;
  f.egg = std::string(spec.substr(0, a));
  f.object_id = object_from_name(std::string(spec.substr(a + 1, b - a - 1)));
  std::string num(spec.substr(b + 1));
  if (!num.empty() && num.front() == '+') num.erase(0, 1);
  try {
    std::size_t used = 0;
    f.offset = std::stod(num, &used);
    if (used != num.size()) throw ConfigError("bad bias offset");
  } catch (const std::logic_error&) {
    throw ConfigError("bad bias offset '" + num + "'");
  }
  return f;
}

}  // namespace makesense::eggsim
