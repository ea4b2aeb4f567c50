#pragma once

#include <memory>

#include "makesense/eggsim/fleet.hpp"
#include "makesense/eggsim/scenario.hpp"
#include "makesense/gateway/testbed.hpp"
#include "makesense/net/memory_network.hpp"

namespace makesense::gateway {

struct SimulationOptions {
  eggsim::ScenarioSpec scenario;
  eggsim::FaultPlan faults;
  TestbedOptions testbed;
  eggsim::FleetOptions fleet;
  net::MemoryNetwork::Options network;
  Duration drain{5000};  // run past the end so the last batches are acked and stored
};

/// A scenario fleet and a testbed wired over an in-memory network on a
/// virtual clock.
class Simulation {
 public:
  explicit Simulation(SimulationOptions options);
  ~Simulation();

  Scheduler& clock() { return clock_; }
  Testbed& testbed() { return *testbed_; }
  eggsim::Fleet& fleet() { return *fleet_; }
  TimePoint t0() const { return t0_; }
  TimePoint end() const { return t0_ + options_.scenario.duration; }

  /// Boots the fleet; sampling stops at t0 + duration.
  void start();
  void run_until(TimePoint t) { clock_.run_until(t); }
  /// start(), run to the end plus the drain, flush.
  void run();

 private:
  SimulationOptions options_;
  Scheduler clock_;
  net::MemoryNetwork network_;
  std::unique_ptr<net::DatagramTransport> port_;
  std::unique_ptr<Testbed> testbed_;
  std::unique_ptr<eggsim::Fleet> fleet_;
  TimePoint t0_;
  bool started_ = false;
};

}  // namespace makesense::gateway
