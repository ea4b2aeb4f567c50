#include <cmath>

#include "doctest.h"
#include "makesense/collector/collector.hpp"
#include "makesense/eggsim/fleet.hpp"
#include "makesense/lwm2m/catalog.hpp"
#include "makesense/lwm2m/records.hpp"
#include "makesense/net/memory_network.hpp"

using namespace makesense;
using namespace makesense::eggsim;
using lwm2m::Path;

TEST_CASE("signal model examples") {
  SignalModel temp;
  temp.baseline = 21;
  temp.amplitude = 2;
  CHECK(sample(temp, 3303, kDefaultEpoch + hours(6), {}) == doctest::Approx(23.0).epsilon(1e-12));
  CHECK(sample(temp, 3303, kDefaultEpoch + hours(18), {}) == doctest::Approx(19.0).epsilon(1e-12));

  SignalModel prox = default_model(3330);
  prox.hi = 80;
  prox.baseline = 80;
  CHECK(sample(prox, 3330, kDefaultEpoch + minutes(7), {}) == 80.0);
  prox.pulses.push_back({kDefaultEpoch, kDefaultEpoch + minutes(1), 45, Pulse::Mode::Set});
  CHECK(sample(prox, 3330, kDefaultEpoch + seconds(30), {}) == 45.0);
  CHECK(sample(prox, 3330, kDefaultEpoch + minutes(1), {}) == 80.0);

  SignalModel hum = default_model(3304);
  hum.baseline = 130;
  CHECK(sample(hum, 3304, kDefaultEpoch, {1, 2}) == 100.0);
}

TEST_CASE("samples are deterministic and respect physical ranges") {
  for (const auto& spec : lwm2m::all_objects()) {
    if (!spec.sensor || spec.id == 27000) continue;
    const SignalModel m = default_model(spec.id);
    for (int i = 0; i < 2000; ++i) {
      const TimePoint t = kDefaultEpoch + seconds(i * 37);
      const double v = sample(m, spec.id, t, {7, static_cast<std::uint64_t>(i % 5)});
      CHECK(v >= spec.min_value);
      CHECK(v <= spec.max_value);
      CHECK(v == sample(m, spec.id, t, {7, static_cast<std::uint64_t>(i % 5)}));
    }
  }
  // Loudness never goes below zero even under a large negative pulse.
  SignalModel loud = default_model(3324);
  loud.pulses.push_back({kDefaultEpoch, kDefaultEpoch + hours(1), -500, Pulse::Mode::Add});
  CHECK(sample(loud, 3324, kDefaultEpoch, {}) == 0.0);
}

TEST_CASE("path loss model") {
  CHECK(rssi_at(1.0, 0, 0) == -45.0);
  CHECK(rssi_at(10.0, 0, 0) == doctest::Approx(-70.0));
  CHECK(room_distance({"a", 0, 0}, {"a", 9, 9}) == 1.0);
  CHECK(room_distance({"a", 0, 0}, {"b", 3, 4}) == 5.0);
  // Seeded noise has roughly the configured spread.
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double e = rssi_at(1.0, 2.0, mix64(99, static_cast<std::uint64_t>(i))) + 45.0;
    sum += e;
    sq += e * e;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::sqrt(sq / n) == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("egg config file") {
  const auto c = parse_egg_config(
      "# flashed config\n"
      "egg_id = egg-17\n"
      "server_host=10.0.0.2\n"
      "server_port=5684\n"
      "psk_key=000102030405060708090a0b0c0d0e0f\n"
      "sample_interval_ms=3000\n"
      "enabled_sensors=temperature, 3304,proximity\n"
      "room=kitchen\n"
      "proximity_clamp_cm=80\n"
      "wifi_ssid=lab\n"
      "wifi_pass=secret\n");
  CHECK(c.egg_id == "egg-17");
  CHECK(c.sample_interval_ms == 3000);
  CHECK(c.enabled_sensors == std::vector<int>{3303, 3304, 3330});
  CHECK(c.proximity_clamp_cm == 80);
  CHECK(c.identity().id == "egg-17");
  CHECK(parse_egg_config(format_egg_config(c)).enabled_sensors == c.enabled_sensors);
  CHECK(parse_egg_config("egg_id=x\n").enabled_sensors.size() == 7);
  CHECK_THROWS_AS(parse_egg_config("egg_id=x\nsample_interval_ms=99\n"), ConfigError);
  CHECK_THROWS_AS(parse_egg_config("egg_id=x\nproximity_clamp_cm=151\n"), ConfigError);
  CHECK_THROWS_AS(parse_egg_config("egg_id=x\nproximity_clamp_cm=0\n"), ConfigError);
  CHECK_THROWS_AS(parse_egg_config("egg_id=x\nenabled_sensors=buzzer\n"), ConfigError);
  CHECK_THROWS_AS(parse_egg_config("egg_id=x\nnonsense=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_egg_config("sample_interval_ms=1000\n"), ConfigError);
}

TEST_CASE("scenario presets and file format") {
  const auto home = home_scenario(20, 5);
  CHECK(home.sites.size() == 20);
  for (const auto& s : home.sites) {
    CHECK(s.egg_count >= 13);
    CHECK(s.egg_count <= 22);
    CHECK_FALSE(s.energy_channels.empty());
  }
  const auto back = parse_scenario(format_scenario(home));
  CHECK(back.egg_count() == home.egg_count());
  CHECK(back.sites[3].rooms.size() == home.sites[3].rooms.size());
  CHECK(back.sample_interval_ms == 3000);

  const auto office = office_scenario();
  CHECK(office.egg_count() == 100);
  CHECK(office.sample_interval_ms == 1000);

  CHECK_THROWS_AS(parse_scenario(R"({"kind":"home","sites":[{"site_id":"h1","egg_count":12}]})"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"kind":"home","sites":[{"site_id":"h1","egg_count":23}]})"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"kind":"castle","sites":[]})"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{"), ConfigError);
  CHECK_NOTHROW(parse_scenario(R"({"kind":"home","sites":[{"site_id":"h1","egg_count":13}]})"));

  const auto plan = parse_fault_plan(
      R"([{"kind":"crash","egg":"egg-3","at_s":10,"restart_after_s":5},
          {"kind":"bias","egg":"egg-2","sensor":"temp","offset":2},
          {"kind":"silent","egg":"egg-4","sensor":3304,"at_s":60,"until_s":120}])");
  REQUIRE(plan.faults.size() == 3);
  CHECK(plan.faults[0].restart_after == seconds(5));
  CHECK(plan.faults[1].object_id == 3303);
  CHECK(plan.faults[2].until == seconds(120));
  const auto bias = parse_bias("egg-3:temp:+2");
  CHECK(bias.egg == "egg-3");
  CHECK(bias.object_id == 3303);
  CHECK(bias.offset == 2.0);
  CHECK_THROWS_AS(parse_bias("egg-3:temp"), ConfigError);
  CHECK_THROWS_AS(parse_bias("egg-3:teapot:1"), ConfigError);
}

namespace {

/// Minimal backend: secured server plus the collector control plane, with the
/// raw notification stream captured.
struct Backend {
  Scheduler clock;
  net::MemoryNetwork network{clock};
  std::unique_ptr<net::DatagramTransport> port = network.bind({"server", 5684});
  secure::KeyStore keys;
  secure::SecureServer secure{*port, keys, 1};
  lwm2m::Registry registry{clock};
  lwm2m::Server server{clock, secure, registry, 2};
  broker::Broker broker{clock};
  collector::Blacklist blacklist;
  collector::ControlPlane control;
  std::vector<std::string> stream;
  std::map<std::string, int> per_egg;
  std::vector<lwm2m::RegistryEvent> events;

  explicit Backend(collector::ControlPlaneOptions opts = {})
      : control(clock, broker, server, blacklist, opts) {
    secure.on_session([this](const net::Address& peer) { server.forget_peer(peer); });
    collector::bridge(registry, server, broker);
    server.on_notification([this](const lwm2m::Server::Notification& n) {
      stream.push_back(n.endpoint + n.path.to_string() + n.payload);
      ++per_egg[n.endpoint + n.path.to_string()];
    });
    registry.on_event([this](const lwm2m::RegistryEvent& e) { events.push_back(e); });
    control.start();
  }

  Fleet::PortFactory ports() {
    return [this](const DeviceSpec& spec, std::size_t) { return network.bind({spec.endpoint, 1}); };
  }
};

}  // namespace

TEST_CASE("office fleet: every egg notifies once per second per resource") {
  Backend be;
  Fleet fleet(be.clock, office_scenario(10, 1000, seconds(60)), {"server", 5684}, be.ports());
  fleet.provision(be.keys);
  const TimePoint t0 = be.clock.now();
  fleet.sample_until(t0 + seconds(60));
  fleet.start();
  be.clock.run_until(t0 + seconds(70));
  CHECK(be.registry.size() == 10);
  CHECK(be.per_egg.size() == 10 * 7);
  for (const auto& [key, n] : be.per_egg) CHECK_MESSAGE(n == 60, key);
}

TEST_CASE("home fleet with hubs: eggs at 3 s, energy channels at 6 s") {
  collector::ControlPlaneOptions opts;
  opts.default_period = seconds(3);
  opts.object_periods[3305] = seconds(6);
  Backend be(opts);
  Fleet fleet(be.clock, home_scenario(2, 11, minutes(5)), {"server", 5684}, be.ports());
  fleet.provision(be.keys);
  const TimePoint t0 = be.clock.now();
  fleet.sample_until(t0 + minutes(5));
  fleet.start();
  be.clock.run_until(t0 + minutes(6));
  int hubs = 0;
  for (auto* d : fleet.devices()) {
    if (d->spec().kind == DeviceSpec::Kind::Hub) {
      ++hubs;
      for (std::size_t i = 0; i < d->spec().channels.size(); ++i)
        CHECK(be.per_egg[d->endpoint() + Path(3305, static_cast<int>(i), 5700).to_string()] == 50);
    } else {
      for (int obj : d->spec().sensors)
        CHECK(be.per_egg[d->endpoint() + Path(obj, 0, lwm2m::find_object(obj)->measurement_resource).to_string()] ==
              100);
    }
  }
  CHECK(hubs == 2);
}

TEST_CASE("same seed gives a byte-identical notification stream") {
  auto run = [] {
    Backend be;
    Fleet fleet(be.clock, office_scenario(4, 1000, seconds(20)), {"server", 5684}, be.ports());
    fleet.provision(be.keys);
    fleet.sample_until(be.clock.now() + seconds(20));
    fleet.start();
    be.clock.run_for(seconds(25));
    return be.stream;
  };
  const auto a = run();
  CHECK(a.size() == 4 * 7 * 20);
  CHECK(a == run());
}

TEST_CASE("crash fault with watchdog: re-registration exactly at the restart instant") {
  Backend be;
  FaultPlan plan;
  plan.faults.push_back({Fault::Kind::Crash, "egg-3", seconds(10), seconds(5)});
  Fleet fleet(be.clock, office_scenario(5, 1000, seconds(60)), {"server", 5684}, be.ports(), {}, plan);
  fleet.provision(be.keys);
  const TimePoint t0 = be.clock.now();
  fleet.start();
  be.clock.run_until(t0 + seconds(30));
  std::vector<std::pair<lwm2m::RegistryEvent::Kind, TimePoint>> egg3;
  for (const auto& e : be.events)
    if (e.registration.endpoint == "egg-3") egg3.emplace_back(e.kind, e.at);
  using K = lwm2m::RegistryEvent::Kind;
  REQUIRE(egg3.size() == 3);
  CHECK(egg3[0] == std::pair{K::Registered, t0});
  CHECK(egg3[1] == std::pair{K::Deregistered, t0 + seconds(15)});
  CHECK(egg3[2] == std::pair{K::Registered, t0 + seconds(15)});
  CHECK(fleet.find("egg-3")->boots() == 2);
  // Observations came back after the restart.
  CHECK(fleet.find("egg-3")->client().observation_count() == 7);
}

TEST_CASE("bias and silence faults") {
  Backend be;
  FaultPlan plan;
  plan.faults.push_back({Fault::Kind::Bias, "egg-1", seconds(0), std::nullopt, 3303, std::nullopt, 2.0});
  plan.faults.push_back({Fault::Kind::Silent, "egg-2", seconds(5), std::nullopt, 3304, seconds(10), 0});
  Fleet fleet(be.clock, colocated_scenario(3, 1000, seconds(20)), {"server", 5684}, be.ports(), {}, plan);
  fleet.provision(be.keys);
  fleet.sample_until(be.clock.now() + seconds(20));
  fleet.start();
  be.clock.run_for(seconds(25));
  CHECK(be.per_egg["egg-2/3304/0/5700"] == 15);
  CHECK(be.per_egg["egg-1/3304/0/5700"] == 20);
  // Co-located eggs share the environment; egg-1 reads the same plus its bias and own sensor noise.
  const TimePoint t = be.clock.now();
  const double d = fleet.find("egg-1")->clean_value(3303, t) - fleet.find("egg-3")->clean_value(3303, t);
  CHECK(std::abs(d) < 0.5);
}

TEST_CASE("wrong fleet key: device never registers") {
  Backend be;
  Fleet fleet(be.clock, office_scenario(1, 1000, seconds(20)), {"server", 5684}, be.ports());
  be.keys.add(Fleet::derive_identity(999, "egg-1"));
  fleet.start();
  be.clock.run_for(seconds(30));
  CHECK(be.registry.size() == 0);
  CHECK(fleet.find("egg-1")->last_connect() == secure::SecureClient::Status::AuthFailure);
}
