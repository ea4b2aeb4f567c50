#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "makesense/eggsim/device.hpp"
#include "makesense/eggsim/scenario.hpp"

namespace makesense::eggsim {

struct FleetOptions {
  bool secure = true;
  int lifetime_s = 300;
  std::string firmware_version = "1.0.0";
  coap::TransmissionParams params;
};

/// All devices of a scenario on one clock. Devices are created up front so
/// their PSKs can be provisioned; start() boots them together.
class Fleet {
 public:
  using PortFactory = std::function<std::unique_ptr<net::DatagramTransport>(const DeviceSpec& spec, std::size_t index)>;

  Fleet(Scheduler& scheduler, ScenarioSpec scenario, net::Address server, PortFactory ports, FleetOptions options = {},
        FaultPlan faults = {});
  ~Fleet();

  /// Adds every device's PSK identity to the server's key table.
  void provision(secure::KeyStore& keys) const;

  void start();
  void stop();
  /// No notification is generated for sampling instants after `t`.
  void sample_until(TimePoint t);

  TimePoint start_time() const { return t0_; }
  const ScenarioSpec& scenario() const { return scenario_; }
  std::vector<Device*> devices() const;
  std::vector<Device*> eggs() const;
  Device* find(const std::string& endpoint) const;

  /// Ground truth: the room a wristband is in at `t`, or nullopt when away.
  std::optional<std::string> band_room(const std::string& band_id, TimePoint t) const;

  static secure::PskIdentity derive_identity(std::uint64_t seed, const std::string& endpoint);

 private:
  Scheduler& scheduler_;
  ScenarioSpec scenario_;
  FleetOptions options_;
  FaultPlan faults_;
  TimePoint t0_;
  std::vector<std::unique_ptr<Device>> devices_;
  std::unordered_map<std::string, Device*> by_endpoint_;
  std::vector<Scheduler::TimerId> timers_;
  std::shared_ptr<bool> alive_;
};

}  // namespace makesense::eggsim
