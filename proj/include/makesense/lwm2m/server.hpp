#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>

#include "makesense/coap/messenger.hpp"
#include "makesense/lwm2m/object_model.hpp"
#include "makesense/lwm2m/registry.hpp"

namespace makesense::lwm2m {

/// LWM2M server: the /rd registration interface plus device-management and
/// observe requests toward registered clients.
class Server {
 public:
  struct Notification {
    std::string endpoint;
    Path path;
    std::string payload;
    TimePoint received;
  };
  using NotificationSink = std::function<void(const Notification&)>;
  using Done = std::function<void(const coap::Outcome&)>;

  struct Stats {
    std::uint64_t registrations = 0;
    std::uint64_t rejected_registrations = 0;
    std::uint64_t notifications = 0;
    std::uint64_t rejected_notifications = 0;
  };

  Server(Scheduler& scheduler, net::DatagramTransport& transport, Registry& registry,
         std::optional<std::uint64_t> seed = std::nullopt, coap::TransmissionParams params = {});
  ~Server();

  void on_notification(NotificationSink sink);
  /// Serves requests whose first Uri-Path segment equals `segment` (e.g. "fw").
  void serve(const std::string& segment, coap::Messenger::RequestHandler handler);

  /// GET with Observe=0 and Uri-Query pmax=<seconds>. Throws NotRegistered or PathNotFound.
  void observe(const std::string& endpoint, const Path& path, Duration period, Done done = {});
  void cancel_observation(const std::string& endpoint, const Path& path, Done done = {});
  void read(const std::string& endpoint, const Path& path, Done done);
  void write(const std::string& endpoint, const Path& path, const std::string& value, Done done);
  void execute(const std::string& endpoint, const Path& path, Done done, const std::string& args = {});

  bool observing(const std::string& endpoint, const Path& path) const;
  std::vector<Path> observations(const std::string& endpoint) const;

  /// The peer's session restarted; its message ids may repeat.
  void forget_peer(const net::Address& peer) { messenger_.forget_peer(peer); }

  Registry& registry() { return registry_; }
  coap::Messenger& messenger() { return messenger_; }
  Stats stats() const;

 private:
  struct Observation {
    std::string endpoint;
    Path path;
    Duration period;
    Bytes token;
  };

  coap::Message handle_request(const net::Address& from, const coap::Message& req);
  coap::Message handle_rd(const net::Address& from, const coap::Message& req, std::string_view rest);
  bool handle_notification(const net::Address& from, const coap::Message& msg);
  void on_registry_event(const RegistryEvent& ev);
  Registration require(const std::string& endpoint, const Path& path) const;
  void send_request(const std::string& endpoint, const Path& path, coap::Code code, std::string payload, Done done,
                    std::optional<std::uint32_t> observe = std::nullopt, std::optional<Duration> period = std::nullopt,
                    Bytes token = {});
  void drop_observation_locked(const std::string& endpoint, const Path& path);

  Scheduler& scheduler_;
  Registry& registry_;
  coap::Messenger messenger_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Observation> by_token_;                 // token bytes -> observation
  std::map<std::pair<std::string, Path>, std::string> by_target_;        // (endpoint, path) -> token bytes
  std::unordered_map<std::string, coap::Messenger::RequestHandler> handlers_;
  NotificationSink sink_;
  Stats stats_;
};

}  // namespace makesense::lwm2m
