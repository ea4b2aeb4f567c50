#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "makesense/common/scheduler.hpp"
#include "makesense/lwm2m/path.hpp"
#include "makesense/net/transport.hpp"

namespace makesense::lwm2m {

MAKESENSE_DEFINE_ERROR(UnknownRegistration, Lwm2mError);
MAKESENSE_DEFINE_ERROR(NotRegistered, Lwm2mError);

struct Registration {
  std::string endpoint;
  std::string id;
  int lifetime_s = 0;
  std::vector<Path> links;
  net::Address address;
  std::string firmware_version;
  TimePoint registered_at;
  TimePoint last_update;

  TimePoint expires_at() const { return last_update + seconds(lifetime_s); }
};

struct RegistryEvent {
  enum class Kind { Registered, Updated, Deregistered };
  Kind kind;
  Registration registration;
  TimePoint at;
  std::string reason;  // deregistrations: "deleted", "expired" or "replaced"
};

const char* to_string(RegistryEvent::Kind k);

/// Server-side table of live client registrations. A registration lapses once
/// the clock reaches last_update + lifetime; each entry carries a timer for
/// that instant so expiry events fire exactly on time.
///
/// Thread-safe. Listeners run on the calling thread after the table lock is released.
class Registry {
 public:
  using Listener = std::function<void(const RegistryEvent&)>;

  explicit Registry(Scheduler& scheduler);
  ~Registry();

  void on_event(Listener listener);

  /// Validates links against the catalog; replaces any live registration of the same endpoint.
  Registration register_client(const std::string& endpoint, int lifetime_s, std::vector<Path> links,
                               const net::Address& address, std::string firmware_version = {});
  /// Refreshes last_update (and optionally lifetime/links). Throws UnknownRegistration.
  Registration update(const std::string& registration_id, std::optional<int> lifetime_s = std::nullopt,
                      std::optional<std::vector<Path>> links = std::nullopt,
                      std::optional<net::Address> address = std::nullopt);
  void deregister(const std::string& registration_id);
  /// Removes every entry whose deadline is at or before `now`; returns their endpoints.
  std::vector<std::string> expire_registrations(TimePoint now);

  std::optional<Registration> find_endpoint(const std::string& endpoint) const;
  std::optional<Registration> find_id(const std::string& registration_id) const;
  std::vector<Registration> list() const;
  std::size_t size() const;

 private:
  struct Entry {
    Registration reg;
    Scheduler::TimerId timer = 0;
  };

  void arm(Entry& e);
  void emit(const std::vector<RegistryEvent>& events);

  Scheduler& scheduler_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> by_endpoint_;
  std::unordered_map<std::string, std::string> id_to_endpoint_;
  std::uint64_t next_id_ = 1;
  std::vector<Listener> listeners_;
};

}  // namespace makesense::lwm2m
