#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "makesense/collector/collector.hpp"
#include "makesense/collector/supervisor.hpp"
#include "makesense/datastore/reading.hpp"
#include "makesense/lwm2m/catalog.hpp"
#include "makesense/lwm2m/client.hpp"
#include "makesense/net/memory_network.hpp"
#include "support/temp_dir.hpp"

using namespace makesense;
using namespace makesense::collector;
using lwm2m::Path;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Egg {
  std::unique_ptr<net::DatagramTransport> port;
  lwm2m::ObjectModel model;
  std::unique_ptr<lwm2m::Client> client;
};

struct Rig {
  Scheduler clock;
  net::MemoryNetwork network{clock, {milliseconds(2)}};
  std::unique_ptr<net::DatagramTransport> server_port = network.bind({"server", 5683});
  lwm2m::Registry registry{clock};
  lwm2m::Server server{clock, *server_port, registry, 7};
  broker::Broker broker{clock};
  Blacklist blacklist;
  PseudonymTable pseudonyms{std::nullopt, 3};
  DeadLetterLog dead;
  ControlPlane control;
  std::vector<std::unique_ptr<Egg>> eggs;
  std::vector<datastore::SensorReading> live;

  explicit Rig(ControlPlaneOptions opts = {}) : control(clock, broker, server, blacklist, opts) {
    bridge(registry, server, broker);
    broker.declare_queue("collector.raw");
    broker.bind(broker::Exchange::LiveData, "raw.#", "collector.raw");
    broker.declare_queue("sink");
    broker.bind(broker::Exchange::LiveData, "live.#", "sink");
    broker.consume("sink", [this](const broker::Delivery& d) {
      live.push_back(datastore::decode_reading(*d.payload));
      broker.ack(d.queue, d.tag);
    });
    control.start();
  }

  Egg& add_egg(const std::string& name, std::vector<int> objects) {
    auto egg = std::make_unique<Egg>();
    egg->port = network.bind({name, 40000});
    egg->model.define(Path(3, 0, lwm2m::device::kFirmwareVersion), std::string("1.0.0"), lwm2m::kRead);
    egg->model.define(Path(3, 0, lwm2m::device::kCurrentTime), 0.0, lwm2m::kRead | lwm2m::kWrite);
    for (int obj : objects) {
      const Path p(obj, 0, lwm2m::find_object(obj)->measurement_resource);
      egg->model.define(p, 0.0, lwm2m::kRead);
      egg->model.set_source(p, [obj](TimePoint t) -> std::optional<lwm2m::Value> {
        return obj + std::fmod(to_unix_seconds(t), 10.0);
      });
    }
    egg->client = std::make_unique<lwm2m::Client>(clock, *egg->port, net::Address{"server", 5683}, egg->model,
                                                  lwm2m::ClientOptions{name}, eggs.size() + 100);
    eggs.push_back(std::move(egg));
    return *eggs.back();
  }
};

}  // namespace

TEST_CASE("endpoint names split into site and device") {
  CHECK(split_endpoint("H3:egg-017", "lab").site == "H3");
  CHECK(split_endpoint("H3:egg-017", "lab").device == "egg-017");
  CHECK(split_endpoint("egg-017", "lab").site == "lab");
  CHECK(split_endpoint("egg-017", "lab").device == "egg-017");
}

TEST_CASE("pseudonyms are random, stable and persisted apart from the data") {
  testing::TempDir dir;
  const auto file = dir.path() / "secure" / "pseudonyms.tsv";
  std::string a;
  {
    PseudonymTable t(file);
    a = t.token("H3:egg-017");
    CHECK(a.size() == 32);
    CHECK(a.find("H3") == std::string::npos);
    CHECK(t.token("H3:egg-017") == a);
    CHECK(t.token("H3:egg-018") != a);
    CHECK(t.raw_of(a) == "H3:egg-017");
  }
  CHECK((std::filesystem::status(file).permissions() & std::filesystem::perms::group_all) ==
        std::filesystem::perms::none);
  PseudonymTable again(file);
  CHECK(again.lookup("H3:egg-017") == a);
  CHECK(again.size() == 2);
  // Unseeded tables do not derive tokens from the name.
  PseudonymTable other;
  CHECK(other.token("H3:egg-017") != a);
}

TEST_CASE("control events round-trip through JSON") {
  lwm2m::RegistryEvent ev{lwm2m::RegistryEvent::Kind::Deregistered,
                          {"egg-5", "1f", 300, {Path(3303, 0), Path(3304, 0)}, {"egg", 1}, "1.2.0", kDefaultEpoch,
                           kDefaultEpoch},
                          kDefaultEpoch + seconds(300),
                          "expired"};
  const auto text = encode_control_event(ev);
  CHECK(text.find("\"schema\":1") != std::string::npos);
  const auto back = decode_control_event(text);
  CHECK(back.kind == ev.kind);
  CHECK(back.endpoint == "egg-5");
  CHECK(back.registration_id == "1f");
  CHECK(back.links == ev.registration.links);
  CHECK(back.firmware_version == "1.2.0");
  CHECK(back.at == ev.at);
  CHECK(back.reason == "expired");
  CHECK(control_routing_key(ev.kind) == "control.deregistered");
  CHECK_THROWS_AS(decode_control_event("{}"), BadEvent);
  CHECK_THROWS_AS(decode_control_event(R"({"schema":2})"), BadEvent);
}

TEST_CASE("registration fans out to one observation per advertised sensor link") {
  Rig rig;
  rig.add_egg("egg-1", {3303, 3304}).client->start();
  rig.clock.run_for(seconds(1));
  CHECK(rig.server.observations("egg-1") == std::vector<Path>{Path(3303, 0, 5700), Path(3304, 0, 5700)});
  CHECK(rig.control.stats().observations_started == 2);
  CHECK(rig.control.stats().time_syncs == 1);
}

TEST_CASE("blacklisted sensor is not observed and edits apply live") {
  Rig rig;
  rig.blacklist.add({"egg-5", Path(3324, 0)});
  rig.add_egg("egg-5", {3303, 3324}).client->start();
  rig.add_egg("egg-6", {3303, 3324}).client->start();
  rig.clock.run_for(seconds(1));
  CHECK(rig.server.observations("egg-5") == std::vector<Path>{Path(3303, 0, 5700)});
  CHECK(rig.server.observations("egg-6").size() == 2);

  rig.blacklist.add({"egg-6", std::nullopt});
  rig.clock.run_for(seconds(1));
  CHECK(rig.server.observations("egg-6").empty());
  CHECK(rig.eggs[1]->client->observation_count() == 0);

  rig.blacklist.remove({"egg-5", Path(3324, 0)});
  rig.clock.run_for(seconds(1));
  CHECK(rig.server.observations("egg-5").size() == 2);
  CHECK(rig.eggs[0]->client->observation_count() == 2);
}

TEST_CASE("re-registration restarts observations exactly once") {
  Rig rig;
  auto& egg = rig.add_egg("egg-1", {3303, 3304});
  egg.client->start();
  rig.clock.run_for(seconds(1));
  egg.client->stop();
  rig.server.forget_peer({"egg-1", 40000});
  egg.client->start();
  rig.clock.run_for(seconds(1));
  CHECK(rig.control.stats().observations_started == 4);
  CHECK(egg.client->observation_count() == 2);
  CHECK(rig.server.observations("egg-1").size() == 2);

  // A redelivered event for the current registration changes nothing.
  const auto reg = rig.registry.find_endpoint("egg-1");
  rig.broker.publish(broker::Exchange::Control, "control.registered",
                     encode_control_event({lwm2m::RegistryEvent::Kind::Registered, *reg, rig.clock.now(), {}}));
  rig.clock.run_for(seconds(1));
  CHECK(rig.control.stats().observations_started == 4);
  CHECK(egg.client->observation_count() == 2);
}

TEST_CASE("observe failures are retried with backoff and then given up") {
  Rig rig;
  auto& egg = rig.add_egg("egg-1", {3303});
  egg.client->start();
  // The device dies right after its registration reaches the server.
  rig.registry.on_event([&](const lwm2m::RegistryEvent& e) {
    if (e.kind == lwm2m::RegistryEvent::Kind::Registered) egg.client->stop();
  });
  rig.clock.run_for(seconds(200));
  CHECK(rig.control.stats().observe_failures == 3);
  CHECK(rig.control.stats().observe_given_up == 1);
  CHECK(rig.control.stats().observations_started == 0);
}

TEST_CASE("collector worker pseudonymizes and publishes readings") {
  Rig rig;
  CollectorWorker worker(rig.clock, rig.broker, rig.pseudonyms, rig.dead, {"collector.raw", "lab"});
  worker.start();
  rig.add_egg("H3:egg-017", {3303, 3304}).client->start();
  rig.clock.run_for(seconds(10) + milliseconds(500));
  REQUIRE(rig.live.size() >= 18);
  for (const auto& r : rig.live) {
    CHECK(r.pseudonym == *rig.pseudonyms.lookup("H3:egg-017"));
    CHECK(r.site == *rig.pseudonyms.lookup("site/H3"));
    CHECK(r.endpoint == "egg-017");
    CHECK(r.unit == (r.object_id == 3303 ? "Cel" : "%RH"));
    CHECK(r.server_time >= r.device_time);
    CHECK(r.server_time - r.device_time < seconds(1));
    std::string bytes = datastore::encode_reading(r);
    CHECK(bytes.find("H3") == std::string::npos);
  }
  CHECK(worker.stats().dead_lettered == 0);
}

TEST_CASE("malformed payload is dead-lettered and the pipeline continues") {
  testing::TempDir dir;
  Rig rig;
  DeadLetterLog dead(dir.path() / "dead.jsonl");
  CollectorWorker worker(rig.clock, rig.broker, rig.pseudonyms, dead, {"collector.raw", "lab"});
  worker.start();
  rig.broker.publish(broker::Exchange::LiveData, "raw.H3:egg-1.3303", encode_raw("H3:egg-1", "{not json"));
  rig.broker.publish(broker::Exchange::LiveData, "raw.H3:egg-1.3303",
                     encode_raw("H3:egg-1", R"([{"n":"/3303/0/5700","v":21.5,"t":1527811200}])"));
  rig.broker.publish(broker::Exchange::LiveData, "raw.H3:egg-1.3311",
                     encode_raw("H3:egg-1", R"([{"n":"/3311/0/5706","sv":"#fff","t":1527811200}])"));
  rig.clock.run_for(seconds(1));
  CHECK(dead.count() == 2);
  CHECK(worker.stats().published == 1);
  CHECK(rig.live.size() == 1);
  const auto text = slurp(dir.path() / "dead.jsonl");
  CHECK(text.find("{not json") != std::string::npos);
  CHECK(text.find("H3") == std::string::npos);
  CHECK(text.find(*rig.pseudonyms.lookup("H3:egg-1")) != std::string::npos);
  // processed = published + dead-lettered
  CHECK(worker.stats().deliveries == 3);
  CHECK(worker.stats().records == worker.stats().published + worker.stats().dead_lettered);
}

TEST_CASE("clock drift beyond two seconds triggers a rate-limited resync") {
  ControlPlaneOptions opts;
  opts.resync_min_interval = seconds(20);
  Rig rig(opts);
  std::vector<std::string> drifted;
  CollectorWorker worker(rig.clock, rig.broker, rig.pseudonyms, rig.dead, {"collector.raw", "lab"},
                         [&](const std::string& ep) {
                           drifted.push_back(ep);
                           rig.control.sync_time(ep);
                         });
  worker.start();
  auto& egg = rig.add_egg("egg-1", {3303});
  egg.client->start();
  rig.clock.run_for(seconds(25));
  CHECK(drifted.empty());
  egg.client->set_clock_offset(seconds(-30));
  rig.clock.run_for(seconds(5));
  CHECK_FALSE(drifted.empty());
  CHECK(std::abs(egg.client->clock_offset().count()) < 100);
  CHECK(rig.control.stats().time_syncs == 2);
}

TEST_CASE("killed collector worker leaves its unacked batch for redelivery") {
  Rig rig;
  CollectorWorker a(rig.clock, rig.broker, rig.pseudonyms, rig.dead, {"collector.raw", "lab", milliseconds(500)});
  a.start();
  for (int i = 0; i < 10; ++i)
    rig.broker.publish(broker::Exchange::LiveData, "raw.egg-1.3303",
                       encode_raw("egg-1", R"([{"n":"/3303/0/5700","v":)" + std::to_string(i) +
                                               R"(,"t":)" + std::to_string(1527811200 + i) + "}]"));
  rig.clock.run_for(milliseconds(100));
  CHECK(a.stats().published == 10);
  a.kill();
  CollectorWorker b(rig.clock, rig.broker, rig.pseudonyms, rig.dead, {"collector.raw", "lab"});
  b.start();
  rig.clock.run_for(seconds(31));
  CHECK(b.stats().published == 10);
  CHECK(rig.live.size() == 20);
  CHECK(rig.broker.queue_stats("collector.raw").in_flight == 0);
}

TEST_CASE("supervisor restarts crashed workers and gives up on crash loops") {
  Scheduler clock;
  Supervisor sup(clock, {milliseconds(500), 10, seconds(60)});
  int starts = 0, kills = 0;
  sup.add("storage-0", [&] { ++starts; }, [&] { ++kills; });
  CHECK(starts == 1);
  clock.run_for(seconds(10));
  CHECK(sup.events().empty());

  sup.kill("storage-0", "test");
  CHECK(sup.health()["storage-0"].state == Supervisor::State::Restarting);
  clock.run_for(milliseconds(999));
  CHECK(starts == 2);
  CHECK(sup.health()["storage-0"].state == Supervisor::State::Running);

  for (int i = 0; i < 10; ++i) {
    sup.crashed("storage-0", "boom");
    clock.run_for(seconds(1));
  }
  CHECK(sup.any_given_up());
  CHECK(sup.health()["storage-0"].state == Supervisor::State::GivenUp);
  CHECK(sup.events().back().gave_up);
  const int before = starts;
  clock.run_for(seconds(10));
  CHECK(starts == before);
}
