#include "makesense/gateway/simulation.hpp"

namespace makesense::gateway {

namespace {
const net::Address kServer{"gateway", 5684};
}

Simulation::Simulation(SimulationOptions options)
    : options_(std::move(options)), network_(clock_, options_.network) {
  options_.scenario.validate();
  auto& control = options_.testbed.control;
  control.default_period = milliseconds(options_.scenario.sample_interval_ms);
  control.object_periods[3305] = milliseconds(options_.scenario.energy_interval_ms);
  options_.testbed.params = options_.fleet.params;
  options_.testbed.secure = options_.fleet.secure;
  if (!options_.testbed.seed) options_.testbed.seed = options_.scenario.seed;

  port_ = network_.bind(kServer);
  testbed_ = std::make_unique<Testbed>(clock_, *port_, options_.testbed);
  fleet_ = std::make_unique<eggsim::Fleet>(
      clock_, options_.scenario, kServer,
      [this](const eggsim::DeviceSpec& spec, std::size_t) { return network_.bind({spec.endpoint, 1}); },
      options_.fleet, options_.faults);
  fleet_->provision(testbed_->keys());
  t0_ = clock_.now();
}

Simulation::~Simulation() {
  fleet_->stop();
  testbed_->stop();
}

void Simulation::start() {
  if (started_) return;
  started_ = true;
  fleet_->sample_until(end());
  fleet_->start();
}

void Simulation::run() {
  start();
  clock_.run_until(end() + options_.drain);
  testbed_->flush();
}

}  // namespace makesense::gateway
