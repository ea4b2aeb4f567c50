#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>

#include "makesense/coap/messenger.hpp"
#include "makesense/lwm2m/object_model.hpp"

namespace makesense::lwm2m {

struct ClientOptions {
  std::string endpoint;
  int lifetime_s = 300;
  /// Defaults to half the lifetime.
  std::optional<Duration> update_interval;
  Duration retry_interval{5000};
  /// Notify period when an observe request carries no pmax.
  Duration default_period{1000};
};

/// Device-side LWM2M state machine: registers with the server, keeps the
/// registration fresh, answers read/write/execute and emits NON notifications
/// for active observations.
///
/// Notifications fire on the device's sampling grid: boot + k * period for every
/// k whose instant lies after the observe request, so consecutive notifications
/// are exactly one period apart on the virtual clock.
class Client {
 public:
  enum class State { Stopped, Registering, Registered };
  using StateListener = std::function<void(State)>;
  using Done = std::function<void(const coap::Outcome&)>;

  Client(Scheduler& scheduler, net::DatagramTransport& transport, net::Address server, ObjectModel& model,
         ClientOptions options, std::optional<std::uint64_t> seed = std::nullopt,
         coap::TransmissionParams params = {});
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Boots: anchors the sampling grid at now and registers.
  void start();
  /// Stops silently, as a crash or power loss would.
  void stop();
  /// Sends the deregistration and then stops.
  void deregister(std::function<void()> done = {});

  State state() const { return state_; }
  const std::string& registration_id() const { return registration_id_; }
  const ClientOptions& options() const { return options_; }
  void on_state(StateListener listener) { state_listener_ = std::move(listener); }

  TimePoint device_now() const;
  Duration clock_offset() const { return clock_offset_; }
  void set_clock_offset(Duration offset) { clock_offset_ = offset; }
  TimePoint boot_time() const { return boot_; }

  /// No notifications are emitted for grid instants after `limit`.
  void set_sample_until(std::optional<TimePoint> limit) { sample_until_ = limit; }

  /// Request toward the server, e.g. firmware chunk fetches.
  void request(coap::Message msg, Done done);

  std::size_t observation_count() const { return observations_.size(); }
  std::uint64_t notifications_sent() const { return notifications_sent_; }
  coap::Messenger& messenger() { return messenger_; }

 private:
  struct Observation {
    Path path;
    Duration period;
    Bytes token;
    net::Address peer;
    std::uint32_t sequence = 0;
    TimePoint next;
    Scheduler::TimerId timer = 0;
  };

  void set_state(State s);
  void send_register();
  void send_update();
  void schedule_update();
  void schedule_retry();
  coap::Message handle_request(const net::Address& from, const coap::Message& req);
  coap::Message start_observation(const net::Address& from, const coap::Message& req, const Path& path);
  void tick(const std::string& key);
  void cancel_observation(const std::string& key);
  void clear_observations();

  Scheduler& scheduler_;
  net::Address server_;
  ObjectModel& model_;
  ClientOptions options_;
  coap::Messenger messenger_;

  State state_ = State::Stopped;
  std::uint64_t generation_ = 0;  // invalidates callbacks from before a stop()
  std::string registration_id_;
  TimePoint boot_{};
  Duration clock_offset_{0};
  std::optional<TimePoint> sample_until_;
  Scheduler::TimerId timer_ = 0;
  std::unordered_map<std::string, Observation> observations_;  // token bytes -> observation
  std::uint64_t notifications_sent_ = 0;
  StateListener state_listener_;
};

const char* to_string(Client::State s);

}  // namespace makesense::lwm2m
