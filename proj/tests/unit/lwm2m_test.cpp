#include <cmath>

#include "doctest.h"
#include "makesense/lwm2m/catalog.hpp"
#include "makesense/lwm2m/client.hpp"
#include "makesense/lwm2m/server.hpp"
#include "makesense/net/memory_network.hpp"

using namespace makesense;
using namespace makesense::lwm2m;

TEST_CASE("path parsing and printing") {
  CHECK(Path::parse("/3303/0/5700") == Path(3303, 0, 5700));
  CHECK(Path::parse("/3303") == Path(3303));
  CHECK(Path(3303, 0, 5700).to_string() == "/3303/0/5700");
  CHECK_THROWS_AS(Path::parse("3303/0"), BadPath);
  CHECK_THROWS_AS(Path::parse("/3303/x"), BadPath);
  CHECK_THROWS_AS(Path::parse("/1/2/3/4"), BadPath);
  CHECK_THROWS_AS(Path::parse("/70000"), BadPath);
  CHECK(Path(3303, 0).covers(Path(3303, 0, 5700)));
  CHECK_FALSE(Path(3303, 1).covers(Path(3303, 0, 5700)));
  CHECK(Path(3303).covers(Path(3303, 4)));
}

TEST_CASE("link format") {
  const auto links = parse_links("</3303/0>,</3304/0>;ct=50,</3/0>");
  CHECK(links == std::vector<Path>{Path(3303, 0), Path(3304, 0), Path(3, 0)});
  CHECK(format_links(links) == "</3303/0>,</3304/0>,</3/0>");
  CHECK(parse_links("").empty());
  CHECK_THROWS_AS(parse_links("</3303>"), BadLinkFormat);
  CHECK_THROWS_AS(parse_links("/3303/0"), BadLinkFormat);
  CHECK_THROWS_AS(parse_links("</3303/0/5700>"), BadLinkFormat);
  CHECK_THROWS_AS(parse_links("</3303/0>,"), BadLinkFormat);
  CHECK_THROWS_AS(check_known_objects(parse_links("</9999/0>")), UnknownObject);
  CHECK_NOTHROW(check_known_objects(parse_links("</27000/0>,</3305/2>")));
}

TEST_CASE("catalog") {
  for (int id : {3301, 3303, 3304, 3311, 3324, 3325, 3330, 3338, 3348}) {
    REQUIRE(find_object(id) != nullptr);
    CHECK_FALSE(find_object(id)->extension);
  }
  CHECK(find_object(3348)->measurement_resource == kMultiStateResource);
  CHECK(find_object(3303)->measurement_resource == kValueResource);
  CHECK(find_object(27000)->extension);
  CHECK(find_object(9999) == nullptr);
  int sensors = 0;
  for (const auto& o : all_objects())
    if (o.sensor && !o.extension) ++sensors;
  CHECK(sensors == 7);
}

TEST_CASE("record codec") {
  const std::vector<Record> recs{{"/3303/0/5700", 22.5, from_unix_seconds(1527811203.25)},
                                 {"/3311/0/5706", std::string("#FF\"00"), std::nullopt},
                                 {"/3304/0/5700", 0.1 + 0.2, kDefaultEpoch}};
  const std::string json = encode_records(recs);
  CHECK(json.starts_with(R"([{"n":"/3303/0/5700","v":22.5,"t":1527811203.250})"));
  CHECK(decode_records(json) == recs);
  CHECK_THROWS_AS(decode_records("{"), BadPayload);
  CHECK_THROWS_AS(decode_records("{}"), BadPayload);
  CHECK_THROWS_AS(decode_records(R"([{"v":1}])"), BadPayload);
  CHECK_THROWS_AS(decode_records(R"([{"n":"/1/0/1","v":"x"}])"), BadPayload);
  CHECK_THROWS_AS(decode_records(R"([{"n":"/1/0/1"}])"), BadPayload);
  CHECK(decode_records("[]").empty());
}

TEST_CASE("object model access rules") {
  ObjectModel m;
  m.define(Path(3303, 0, 5700), 21.0, kRead);
  m.define(Path(3311, 0, 5706), std::string("#000000"), kRead | kWrite);
  m.define(Path(3338, 0, 5850), 0.0, kRead | kWrite | kExecute);
  CHECK_THROWS_AS(m.write(Path(3303, 0, 5700), "3"), NotWritable);
  CHECK_THROWS_AS(m.execute(Path(3303, 0, 5700)), NotExecutable);
  CHECK_THROWS_AS(m.read(Path(3303, 0, 1), kDefaultEpoch), PathNotFound);
  CHECK_THROWS_AS(m.write(Path(3338, 0, 5850), "on"), BadPayload);
  m.write(Path(3311, 0, 5706), "#FF0000");
  CHECK(std::get<std::string>(m.get(Path(3311, 0, 5706))) == "#FF0000");
  CHECK(m.instances() == std::vector<Path>{Path(3303, 0), Path(3311, 0), Path(3338, 0)});
  CHECK(m.read_records(Path(3311, 0), kDefaultEpoch).size() == 1);
}

// -- Registry --------------------------------------------------------------------

TEST_CASE("registry: register, re-register and uniqueness") {
  Scheduler clock;
  Registry reg(clock);
  std::vector<std::pair<RegistryEvent::Kind, std::string>> events;
  reg.on_event([&](const RegistryEvent& e) { events.emplace_back(e.kind, e.registration.id); });
  const auto r1 = reg.register_client("egg-017", 300, {Path(3303, 0), Path(3304, 0)}, {"egg", 1});
  CHECK_FALSE(r1.id.empty());
  CHECK(reg.size() == 1);
  const auto r2 = reg.register_client("egg-017", 300, {Path(3303, 0)}, {"egg", 2});
  CHECK(r2.id != r1.id);
  CHECK(reg.size() == 1);
  CHECK_FALSE(reg.find_id(r1.id).has_value());
  CHECK_THROWS_AS(reg.update(r1.id), UnknownRegistration);
  using K = RegistryEvent::Kind;
  CHECK(events == std::vector<std::pair<K, std::string>>{{K::Registered, r1.id}, {K::Deregistered, r1.id},
                                                         {K::Registered, r2.id}});
  CHECK_THROWS_AS(reg.register_client("egg-018", 300, {Path(9999, 0)}, {"egg", 3}), UnknownObject);
  CHECK(reg.size() == 1);
}

TEST_CASE("registry: lifetime expiry fires exactly at the deadline") {
  Scheduler clock;
  Registry reg(clock);
  std::vector<TimePoint> expired_at;
  reg.on_event([&](const RegistryEvent& e) {
    if (e.kind == RegistryEvent::Kind::Deregistered) {
      CHECK(e.reason == "expired");
      expired_at.push_back(e.at);
    }
  });
  const TimePoint t0 = clock.now();
  reg.register_client("egg-1", 300, {Path(3303, 0)}, {"a", 1});
  clock.run_until(t0 + seconds(300) - milliseconds(1));
  CHECK(reg.size() == 1);
  clock.run_until(t0 + seconds(301));
  CHECK(reg.size() == 0);
  REQUIRE(expired_at.size() == 1);
  CHECK(expired_at[0] - t0 == seconds(300));
}

TEST_CASE("registry: an update at 299 s extends life to 599 s; only the silent device expires") {
  Scheduler clock;
  Registry reg(clock);
  std::vector<std::string> expired;
  reg.on_event([&](const RegistryEvent& e) {
    if (e.kind == RegistryEvent::Kind::Deregistered) expired.push_back(e.registration.endpoint);
  });
  const TimePoint t0 = clock.now();
  const auto a = reg.register_client("egg-a", 300, {Path(3303, 0)}, {"a", 1});
  reg.register_client("egg-b", 300, {Path(3303, 0)}, {"b", 1});
  clock.run_until(t0 + seconds(299));
  reg.update(a.id);
  clock.run_until(t0 + seconds(598));
  CHECK(expired == std::vector<std::string>{"egg-b"});
  CHECK(reg.find_endpoint("egg-a").has_value());
  clock.run_until(t0 + seconds(599));
  CHECK(expired == std::vector<std::string>{"egg-b", "egg-a"});
}

// -- Server <-> client --------------------------------------------------------------

namespace {

double trace(TimePoint t) { return 20.0 + std::sin(to_unix_seconds(t) / 100.0); }

struct Rig {
  Scheduler clock;
  net::MemoryNetwork network{clock, {milliseconds(5)}};
  std::unique_ptr<net::DatagramTransport> server_port = network.bind({"server", 5683});
  std::unique_ptr<net::DatagramTransport> egg_port = network.bind({"egg", 40000});
  Registry registry{clock};
  Server server{clock, *server_port, registry, 1};
  ObjectModel model;
  std::unique_ptr<Client> client;
  std::vector<Server::Notification> notes;
  std::vector<RegistryEvent> events;

  explicit Rig(ClientOptions opts = {"egg-017"}) {
    model.define(Path(3, 0, device::kFirmwareVersion), std::string("1.0.0"), kRead);
    model.define(Path(3, 0, device::kReboot), 0.0, kExecute);
    model.define(Path(3, 0, device::kCurrentTime), 0.0, kRead | kWrite);
    model.define(Path(3303, 0, kValueResource), 0.0, kRead);
    model.set_source(Path(3303, 0, kValueResource), [](TimePoint t) -> std::optional<Value> { return trace(t); });
    model.define(Path(3311, 0, kColourResource), std::string("#000000"), kRead | kWrite);
    model.define(Path(3338, 0, kOnOffResource), 0.0, kRead | kWrite | kExecute);
    client = std::make_unique<Client>(clock, *egg_port, net::Address{"server", 5683}, model, opts, 2);
    server.on_notification([this](const Server::Notification& n) { notes.push_back(n); });
    registry.on_event([this](const RegistryEvent& e) { events.push_back(e); });
  }

  coap::Outcome run_request(const std::function<void(Server::Done)>& issue) {
    std::optional<coap::Outcome> out;
    issue([&](const coap::Outcome& o) { out = o; });
    clock.run_for(seconds(1));
    REQUIRE(out.has_value());
    return *out;
  }
};

}  // namespace

TEST_CASE("client registers with links and firmware version over CoAP") {
  Rig rig;
  rig.client->start();
  rig.clock.run_for(seconds(1));
  CHECK(rig.client->state() == Client::State::Registered);
  const auto reg = rig.registry.find_endpoint("egg-017");
  REQUIRE(reg.has_value());
  CHECK(reg->id == rig.client->registration_id());
  CHECK(reg->firmware_version == "1.0.0");
  CHECK(reg->links == std::vector<Path>{Path(3, 0), Path(3303, 0), Path(3311, 0), Path(3338, 0)});
  CHECK(reg->address == net::Address{"egg", 40000});
}

TEST_CASE("client updates keep the registration alive past its lifetime") {
  Rig rig({"egg-017", 60});
  rig.client->start();
  rig.clock.run_for(seconds(600));
  CHECK(rig.registry.size() == 1);
  for (const auto& e : rig.events) CHECK(e.kind != RegistryEvent::Kind::Deregistered);
}

TEST_CASE("observe at 3 s for 30 s yields exactly 10 notifications matching the trace") {
  Rig rig;
  rig.client->start();
  rig.clock.run_for(milliseconds(100));
  const TimePoint start = rig.clock.now();
  const auto out = rig.run_request(
      [&](Server::Done d) { rig.server.observe("egg-017", Path(3303, 0, kValueResource), seconds(3), d); });
  REQUIRE(coap::succeeded(out));
  rig.clock.run_until(start + seconds(30));
  REQUIRE(rig.notes.size() == 10);
  for (std::size_t i = 0; i < rig.notes.size(); ++i) {
    const auto recs = decode_records(rig.notes[i].payload);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].name == "/3303/0/5700");
    REQUIRE(recs[0].time.has_value());
    CHECK(std::get<double>(recs[0].value) == trace(*recs[0].time));
    if (i > 0) {
      CHECK(*recs[0].time - *decode_records(rig.notes[i - 1].payload)[0].time == seconds(3));
      CHECK(rig.notes[i].received - rig.notes[i - 1].received == seconds(3));
    }
  }
  CHECK(rig.server.observing("egg-017", Path(3303, 0, kValueResource)));
}

TEST_CASE("cancel after two notifications stops the stream") {
  Rig rig;
  rig.client->start();
  rig.clock.run_for(milliseconds(100));
  rig.run_request([&](Server::Done d) { rig.server.observe("egg-017", Path(3303, 0, kValueResource), seconds(1), d); });
  rig.clock.run_until(rig.client->boot_time() + seconds(2) + milliseconds(500));
  CHECK(rig.notes.size() == 2);
  rig.run_request([&](Server::Done d) { rig.server.cancel_observation("egg-017", Path(3303, 0, kValueResource), d); });
  rig.clock.run_for(seconds(10));
  CHECK(rig.notes.size() == 2);
  CHECK(rig.client->observation_count() == 0);
}

TEST_CASE("observe errors") {
  Rig rig;
  CHECK_THROWS_AS(rig.server.observe("egg-017", Path(3303, 0, kValueResource), seconds(1)), NotRegistered);
  rig.client->start();
  rig.clock.run_for(seconds(1));
  CHECK_THROWS_AS(rig.server.observe("egg-017", Path(3304, 0, kValueResource), seconds(1)), PathNotFound);
  const auto out = rig.run_request([&](Server::Done d) { rig.server.observe("egg-017", Path(3303, 0, 1), seconds(1), d); });
  REQUIRE(coap::succeeded(out));
  CHECK(std::get<coap::Message>(out).code == coap::codes::kNotFound);
  CHECK_FALSE(rig.server.observing("egg-017", Path(3303, 0, 1)));
}

TEST_CASE("write, execute and time sync") {
  Rig rig;
  std::vector<TimePoint> buzzes;
  rig.model.on_execute(Path(3338, 0, kOnOffResource), [&](const std::string&) { buzzes.push_back(rig.clock.now()); });
  rig.client->start();
  rig.clock.run_for(seconds(1));

  auto out = rig.run_request([&](Server::Done d) { rig.server.write("egg-017", Path(3311, 0, kColourResource), "#FF0000", d); });
  CHECK(std::get<coap::Message>(out).code == coap::codes::kChanged);
  CHECK(std::get<std::string>(rig.model.get(Path(3311, 0, kColourResource))) == "#FF0000");

  out = rig.run_request([&](Server::Done d) { rig.server.execute("egg-017", Path(3338, 0, kOnOffResource), d); });
  CHECK(std::get<coap::Message>(out).code == coap::codes::kChanged);
  CHECK(buzzes.size() == 1);

  out = rig.run_request([&](Server::Done d) { rig.server.write("egg-017", Path(3303, 0, kValueResource), "1", d); });
  CHECK(std::get<coap::Message>(out).code == coap::codes::kMethodNotAllowed);

  rig.client->set_clock_offset(seconds(40));
  const TimePoint server_now = rig.clock.now();
  out = rig.run_request([&](Server::Done d) {
    rig.server.write("egg-017", Path(3, 0, device::kCurrentTime), format_unix_seconds(server_now), d);
  });
  CHECK(std::get<coap::Message>(out).code == coap::codes::kChanged);
  // The write is applied 5 ms after it was issued (network latency).
  CHECK(rig.client->clock_offset() == milliseconds(-5));
}

TEST_CASE("reboot execute: client deregisters and re-registers after the boot delay") {
  Rig rig;
  rig.model.on_execute(Path(3, 0, device::kReboot), [&](const std::string&) {
    rig.clock.post([&] {
      rig.client->deregister([&] { rig.clock.after(seconds(5), [&] { rig.client->start(); }); });
    });
  });
  rig.client->start();
  rig.clock.run_for(seconds(1));
  rig.events.clear();
  rig.run_request([&](Server::Done d) { rig.server.execute("egg-017", Path(3, 0, device::kReboot), d); });
  rig.clock.run_for(seconds(10));
  REQUIRE(rig.events.size() == 2);
  CHECK(rig.events[0].kind == RegistryEvent::Kind::Deregistered);
  CHECK(rig.events[0].reason == "deleted");
  CHECK(rig.events[1].kind == RegistryEvent::Kind::Registered);
  CHECK(rig.events[1].at - rig.events[0].at >= seconds(5));
}

TEST_CASE("server rejects notifications for unknown tokens, which cancels them on the client") {
  Rig rig;
  rig.client->start();
  rig.clock.run_for(milliseconds(100));
  rig.run_request([&](Server::Done d) { rig.server.observe("egg-017", Path(3303, 0, kValueResource), seconds(1), d); });
  // Server forgets the observation without telling the client (e.g. server restart).
  rig.registry.expire_registrations(rig.clock.now() + seconds(1000));
  rig.notes.clear();
  rig.clock.run_for(seconds(5));
  CHECK(rig.notes.empty());
  CHECK(rig.client->observation_count() == 0);
  CHECK(rig.server.stats().rejected_notifications == 1);
}
