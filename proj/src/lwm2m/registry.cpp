#include "makesense/lwm2m/registry.hpp"

#include <cstdio>

namespace makesense::lwm2m {

const char* to_string(RegistryEvent::Kind k) {
  switch (k) {
    case RegistryEvent::Kind::Registered: return "registered";
    case RegistryEvent::Kind::Updated: return "updated";
    case RegistryEvent::Kind::Deregistered: return "deregistered";
  }
  return "?";
}

Registry::Registry(Scheduler& scheduler) : scheduler_(scheduler) {}

Registry::~Registry() {
  std::lock_guard lock(mu_);
  for (auto& [ep, e] : by_endpoint_) scheduler_.cancel(e.timer);
}

void Registry::on_event(Listener listener) {
  std::lock_guard lock(mu_);
  listeners_.push_back(std::move(listener));
}

void Registry::arm(Entry& e) {
  scheduler_.cancel(e.timer);
  e.timer = scheduler_.at(e.reg.expires_at(), [this] { expire_registrations(scheduler_.now()); });
}

void Registry::emit(const std::vector<RegistryEvent>& events) {
  std::vector<Listener> listeners;
  {
    std::lock_guard lock(mu_);
    listeners = listeners_;
  }
  for (const auto& ev : events)
    for (const auto& l : listeners) l(ev);
}

Registration Registry::register_client(const std::string& endpoint, int lifetime_s, std::vector<Path> links,
                                       const net::Address& address, std::string firmware_version) {
  if (endpoint.empty()) throw Lwm2mError("endpoint name required");
  if (lifetime_s <= 0) throw Lwm2mError("lifetime must be positive");
  check_known_objects(links);
  const TimePoint now = scheduler_.now();
  std::vector<RegistryEvent> events;
  Registration reg;
  {
    std::lock_guard lock(mu_);
    if (auto it = by_endpoint_.find(endpoint); it != by_endpoint_.end()) {
      scheduler_.cancel(it->second.timer);
      id_to_endpoint_.erase(it->second.reg.id);
      events.push_back({RegistryEvent::Kind::Deregistered, it->second.reg, now, "replaced"});
      by_endpoint_.erase(it);
    }
    char id[24];
    std::snprintf(id, sizeof id, "%llx", static_cast<unsigned long long>(next_id_++));
    reg.endpoint = endpoint;
    reg.id = id;
    reg.lifetime_s = lifetime_s;
    reg.links = std::move(links);
    reg.address = address;
    reg.firmware_version = std::move(firmware_version);
    reg.registered_at = reg.last_update = now;
    auto& e = by_endpoint_[endpoint];
    e.reg = reg;
    arm(e);
    id_to_endpoint_[reg.id] = endpoint;
  }
  events.push_back({RegistryEvent::Kind::Registered, reg, now, {}});
  emit(events);
  return reg;
}

Registration Registry::update(const std::string& registration_id, std::optional<int> lifetime_s,
                              std::optional<std::vector<Path>> links, std::optional<net::Address> address) {
  if (links) check_known_objects(*links);
  Registration reg;
  {
    std::lock_guard lock(mu_);
    auto id_it = id_to_endpoint_.find(registration_id);
    if (id_it == id_to_endpoint_.end()) throw UnknownRegistration(registration_id);
    auto& e = by_endpoint_.at(id_it->second);
    if (lifetime_s) {
      if (*lifetime_s <= 0) throw Lwm2mError("lifetime must be positive");
      e.reg.lifetime_s = *lifetime_s;
    }
    if (links) e.reg.links = std::move(*links);
    if (address) e.reg.address = *address;
    e.reg.last_update = scheduler_.now();
    arm(e);
    reg = e.reg;
  }
  emit({{RegistryEvent::Kind::Updated, reg, scheduler_.now(), {}}});
  return reg;
}

void Registry::deregister(const std::string& registration_id) {
  Registration reg;
  {
    std::lock_guard lock(mu_);
    auto id_it = id_to_endpoint_.find(registration_id);
    if (id_it == id_to_endpoint_.end()) throw UnknownRegistration(registration_id);
    auto it = by_endpoint_.find(id_it->second);
    scheduler_.cancel(it->second.timer);
    reg = std::move(it->second.reg);
    by_endpoint_.erase(it);
    id_to_endpoint_.erase(id_it);
  }
  emit({{RegistryEvent::Kind::Deregistered, reg, scheduler_.now(), "deleted"}});
}

std::vector<std::string> Registry::expire_registrations(TimePoint now) {
  std::vector<RegistryEvent> events;
  std::vector<std::string> expired;
  {
    std::lock_guard lock(mu_);
    for (auto it = by_endpoint_.begin(); it != by_endpoint_.end();) {
      if (it->second.reg.expires_at() <= now) {
        scheduler_.cancel(it->second.timer);
        expired.push_back(it->first);
        id_to_endpoint_.erase(it->second.reg.id);
        events.push_back({RegistryEvent::Kind::Deregistered, std::move(it->second.reg), now, "expired"});
        it = by_endpoint_.erase(it);
      } else {
        ++it;
      }
    }
  }
  emit(events);
  return expired;
}

std::optional<Registration> Registry::find_endpoint(const std::string& endpoint) const {
  std::lock_guard lock(mu_);
  auto it = by_endpoint_.find(endpoint);
  if (it == by_endpoint_.end()) return std::nullopt;
  return it->second.reg;
}

std::optional<Registration> Registry::find_id(const std::string& registration_id) const {
  std::lock_guard lock(mu_);
  auto id_it = id_to_endpoint_.find(registration_id);
  if (id_it == id_to_endpoint_.end()) return std::nullopt;
  return by_endpoint_.at(id_it->second).reg;
}

std::vector<Registration> Registry::list() const {
  std::lock_guard lock(mu_);
  std::vector<Registration> out;
  out.reserve(by_endpoint_.size());
  for (const auto& [ep, e] : by_endpoint_) out.push_back(e.reg);
  return out;
}

std::size_t Registry::size() const {
  std::lock_guard lock(mu_);
  return by_endpoint_.size();
}

}  // namespace makesense::lwm2m
