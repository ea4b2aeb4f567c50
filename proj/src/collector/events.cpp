#include "makesense/collector/events.hpp"

#include "json.hpp"

namespace makesense::collector {

using lwm2m::RegistryEvent;
using nlohmann::json;

namespace {

RegistryEvent::Kind kind_from(std::string_view s) {
  if (s == "registered") return RegistryEvent::Kind::Registered;
  if (s == "updated") return RegistryEvent::Kind::Updated;
  if (s == "deregistered") return RegistryEvent::Kind::Deregistered;
  throw BadEvent("unknown event kind " + std::string(s));
}

}  // namespace

std::string control_routing_key(RegistryEvent::Kind kind) {
  return std::string("control.") + lwm2m::to_string(kind);
}

std::string encode_control_event(const RegistryEvent& ev) {
  json links = json::array();
  for (const auto& p : ev.registration.links) links.push_back(p.to_string());
  json j{{"schema", 1},
         {"kind", lwm2m::to_string(ev.kind)},
         {"endpoint", ev.registration.endpoint},
         {"id", ev.registration.id},
         {"links", links},
         {"fw", ev.registration.firmware_version},
         {"lt", ev.registration.lifetime_s},
         {"at", ev.at.time_since_epoch().count()}};
  if (!ev.reason.empty()) j["reason"] = ev.reason;
  return j.dump();
}

ControlEvent decode_control_event(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<int>() != 1) throw BadEvent("unsupported schema");
    ControlEvent ev;
    ev.kind = kind_from(j.at("kind").get<std::string>());
    ev.endpoint = j.at("endpoint").get<std::string>();
    ev.registration_id = j.at("id").get<std::string>();
    for (const auto& l : j.at("links")) ev.links.push_back(lwm2m::Path::parse(l.get<std::string>()));
    ev.firmware_version = j.value("fw", "");
    ev.lifetime_s = j.value("lt", 0);
    ev.at = TimePoint{Duration{j.at("at").get<std::int64_t>()}};
    ev.reason = j.value("reason", "");
    return ev;
  } catch (const json::exception& e) {
    throw BadEvent(e.what());
  } catch (const lwm2m::BadPath& e) {
    throw BadEvent(e.what());
  }
}

std::string encode_raw(const std::string& endpoint, std::string_view payload) {
  std::string out;
  out.reserve(endpoint.size() + 1 + payload.size());
  out += endpoint;
  out += '\n';
  out += payload;
  return out;
}

RawNotification decode_raw(std::string_view body) {
  const auto nl = body.find('\n');
  if (nl == std::string_view::npos) return {std::string(body), {}};
  return {std::string(body.substr(0, nl)), std::string(body.substr(nl + 1))};
}

void bridge(lwm2m::Registry& registry, lwm2m::Server& server, broker::Broker& broker) {
  registry.on_event([&broker](const RegistryEvent& ev) {
    broker.publish(broker::Exchange::Control, control_routing_key(ev.kind), encode_control_event(ev));
  });
  server.on_notification([&broker](const lwm2m::Server::Notification& n) {
    broker.publish(broker::Exchange::LiveData, "raw." + n.endpoint + "." + std::to_string(n.path.object),
                   encode_raw(n.endpoint, n.payload));
  });
}

}  // namespace makesense::collector
