#include "makesense/eggsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "makesense/lwm2m/catalog.hpp"

namespace makesense::eggsim {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  return out;
}

const std::map<std::string, int, std::less<>>& sensor_names() {
  static const std::map<std::string, int, std::less<>> names{
      {"illuminance", 3301}, {"light", 3301},      {"temperature", 3303}, {"temp", 3303},
      {"humidity", 3304},    {"power", 3305},      {"loudness", 3324},    {"sound", 3324},
      {"dust", 3325},        {"concentration", 3325}, {"proximity", 3330}, {"distance", 3330},
      {"multistate", 3348},  {"wristband", 27000}};
  return names;
}

int sensor_id(std::string_view token) {
  if (auto it = sensor_names().find(token); it != sensor_names().end()) return it->second;
  const int id = parse_number<int>("enabled_sensors", token);
  const auto* spec = lwm2m::find_object(id);
  if (!spec || !spec->sensor) throw ConfigError("not a sensor object: " + std::string(token));
  return id;
}

}  // namespace

std::vector<int> default_sensors() {
  std::vector<int> out;
  for (const auto& o : lwm2m::all_objects())
    if (o.sensor && !o.extension) out.push_back(o.id);
  return out;
}

void EggConfig::validate() const {
  if (egg_id.empty()) throw ConfigError("egg_id is required");
  if (sample_interval_ms < 100) throw ConfigError("sample_interval_ms must be at least 100");
  if (!(proximity_clamp_cm > 0 && proximity_clamp_cm <= 150)) throw ConfigError("proximity_clamp_cm must be in (0, 150]");
  if (server_port <= 0 || server_port > 65535) throw ConfigError("server_port out of range");
  if (enabled_sensors.empty()) throw ConfigError("enabled_sensors is empty");
  if (!psk_key.empty() && psk_key.size() != 32) throw ConfigError("psk_key must be 32 hex digits");
}

secure::PskIdentity EggConfig::identity() const {
  try {
    return secure::PskIdentity::make(psk_id.empty() ? egg_id : psk_id, from_hex(psk_key));
  } catch (const Error& e) {
    throw ConfigError(std::string("bad psk: ") + e.what());
  }
}

EggConfig parse_egg_config(std::string_view text) {
  EggConfig c;
  c.enabled_sensors = default_sensors();
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "egg_id") c.egg_id = value;
    else if (key == "server_host") c.server_host = value;
    else if (key == "server_port") c.server_port = parse_number<int>(key, value);
    else if (key == "psk_id") c.psk_id = value;
    else if (key == "psk_key") c.psk_key = value;
    else if (key == "sample_interval_ms") c.sample_interval_ms = parse_number<int>(key, value);
    else if (key == "room") c.room = value;
    else if (key == "proximity_clamp_cm") c.proximity_clamp_cm = parse_number<double>(key, value);
    else if (key == "wifi_ssid") c.wifi_ssid = value;
    else if (key == "wifi_pass") c.wifi_pass = value;
    else if (key == "enabled_sensors") {
      c.enabled_sensors.clear();
      std::string_view rest = value;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto tok = trim(rest.substr(0, comma));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        if (!tok.empty()) c.enabled_sensors.push_back(sensor_id(tok));
      }
      std::sort(c.enabled_sensors.begin(), c.enabled_sensors.end());
      c.enabled_sensors.erase(std::unique(c.enabled_sensors.begin(), c.enabled_sensors.end()),
                              c.enabled_sensors.end());
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

std::string format_egg_config(const EggConfig& c) {
  std::string out;
  auto put = [&](std::string_view k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  put("egg_id", c.egg_id);
  put("server_host", c.server_host);
  put("server_port", std::to_string(c.server_port));
  if (!c.psk_id.empty()) put("psk_id", c.psk_id);
  if (!c.psk_key.empty()) put("psk_key", c.psk_key);
  put("sample_interval_ms", std::to_string(c.sample_interval_ms));
  std::string sensors;
  for (int id : c.enabled_sensors) sensors += (sensors.empty() ? "" : ",") + std::to_string(id);
  put("enabled_sensors", sensors);
  if (!c.room.empty()) put("room", c.room);
  char clamp[32];
  auto r = std::to_chars(clamp, clamp + sizeof clamp, c.proximity_clamp_cm);
  put("proximity_clamp_cm", std::string(clamp, r.ptr));
  put("wifi_ssid", c.wifi_ssid);
  put("wifi_pass", c.wifi_pass);
  return out;
}

}  // namespace makesense::eggsim
