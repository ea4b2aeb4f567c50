#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "makesense/broker/broker.hpp"
#include "makesense/lwm2m/registry.hpp"
#include "makesense/lwm2m/server.hpp"

namespace makesense::collector {

MAKESENSE_DEFINE_ERROR(BadEvent, Error);

/// Registration lifecycle event as carried on the control exchange.
struct ControlEvent {
  lwm2m::RegistryEvent::Kind kind = lwm2m::RegistryEvent::Kind::Registered;
  std::string endpoint;
  std::string registration_id;
  std::vector<lwm2m::Path> links;
  std::string firmware_version;
  int lifetime_s = 0;
  TimePoint at;
  std::string reason;
};

std::string encode_control_event(const lwm2m::RegistryEvent& ev);
ControlEvent decode_control_event(std::string_view json);

/// Routing key for control events: "control.registered" and so on.
std::string control_routing_key(lwm2m::RegistryEvent::Kind kind);

/// Raw notification as carried on the live-data exchange before pseudonymization.
struct RawNotification {
  std::string endpoint;
  std::string payload;
};

std::string encode_raw(const std::string& endpoint, std::string_view payload);
RawNotification decode_raw(std::string_view body);

/// Publishes registry events to the control exchange and server notifications
/// to the live-data exchange under "raw.<endpoint>.<object>".
void bridge(lwm2m::Registry& registry, lwm2m::Server& server, broker::Broker& broker);

}  // namespace makesense::collector
