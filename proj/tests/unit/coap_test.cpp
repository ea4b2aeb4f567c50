#include <random>

#include "doctest.h"
#include "makesense/coap/messenger.hpp"
#include "makesense/net/memory_network.hpp"
#include "support/generators.hpp"

using namespace makesense;
using namespace makesense::coap;

using testing::random_valid_message;

TEST_CASE("encode: CON GET with no token, options or payload") {
  Message m;
  m.type = Type::Con;
  m.code = codes::kGet;
  m.message_id = 0x1234;
  CHECK(encode(m) == Bytes{0x40, 0x01, 0x12, 0x34});
}

TEST_CASE("encode: piggybacked ACK 2.05 with token and payload") {
  Message m;
  m.type = Type::Ack;
  m.code = codes::kContent;
  m.message_id = 0x0001;
  m.token = {0xAB};
  m.set_payload("x");
  CHECK(encode(m) == Bytes{0x61, 0x45, 0x00, 0x01, 0xAB, 0xFF, 0x78});
}

TEST_CASE("decode: header-only CON GET") {
  const Message m = decode(Bytes{0x40, 0x01, 0x12, 0x34});
  CHECK(m.type == Type::Con);
  CHECK(m.code == codes::kGet);
  CHECK(m.message_id == 0x1234);
  CHECK(m.token.empty());
  CHECK(m.options.empty());
  CHECK(m.payload.empty());
}

TEST_CASE("decode: malformed inputs") {
  CHECK_THROWS_AS(decode(Bytes{}), MalformedPdu);
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0x12}), MalformedPdu);
  CHECK_THROWS_AS(decode(Bytes{0x49, 0x01, 0x00, 0x00}), MalformedPdu);        // TKL 9
  CHECK_THROWS_AS(decode(Bytes{0x42, 0x01, 0x00, 0x00, 0xAA}), MalformedPdu);  // token overrun
  CHECK_THROWS_AS(decode(Bytes{0x80, 0x01, 0x00, 0x00}), MalformedPdu);        // version 2
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0x00, 0x00, 0xB5, 'a'}), MalformedPdu);  // option overrun
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0x00, 0x00, 0xFF}), MalformedPdu);  // marker, no payload
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0x00, 0x00, 0x11, 'a'}), MalformedPdu);  // option 1 unsupported
}

TEST_CASE("encode: option delta and extended length forms") {
  Message m;
  m.code = codes::kGet;
  m.set_uri_path("/rd");
  m.add_query("ep", std::string(20, 'e'));  // 23-byte value -> 1-byte extended length
  const Bytes wire = encode(m);
  // Uri-Path (11): delta 11, len 2
  CHECK(wire[4] == 0xB2);
  // Uri-Query (15): delta 4, len 13 + 10
  CHECK(wire[7] == 0x4D);
  CHECK(wire[8] == 10);
  CHECK(decode(wire) == m);
}

TEST_CASE("encode: invalid messages are rejected") {
  Message m;
  m.token.assign(9, 1);
  CHECK_THROWS_AS(encode(m), InvalidMessage);
  Message bad_opt;
  bad_opt.options.push_back(Option{8, {}});
  CHECK_THROWS_AS(encode(bad_opt), InvalidMessage);
  Message unsorted;
  unsorted.options.push_back(Option{15, {}});
  unsorted.options.push_back(Option{11, {}});
  CHECK_THROWS_AS(encode(unsorted), InvalidMessage);
}

TEST_CASE("property: decode(encode(m)) == m and encode(decode(b)) == b") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    const Message m = random_valid_message(rng);
    const Bytes wire = encode(m);
    const Message back = decode(wire);
    REQUIRE(back == m);
    REQUIRE(encode(back) == wire);
  }
}

TEST_CASE("property: decoder is total over random bytes") {
  std::mt19937_64 rng(7);
  int ok = 0, malformed = 0;
  for (int i = 0; i < 10000; ++i) {
    Bytes b(std::uniform_int_distribution<std::size_t>(0, 64)(rng));
    for (auto& v : b) v = static_cast<std::uint8_t>(rng());
    if (i % 2 == 0 && b.size() >= 1) b[0] = static_cast<std::uint8_t>(0x40 | (b[0] & 0x3F));  // bias toward version 1
    try {
      (void)decode(b);
      ++ok;
    } catch (const MalformedPdu&) {
      ++malformed;
    }
  }
  CHECK(ok + malformed == 10000);
  CHECK(ok > 0);
}

TEST_CASE("uri helpers") {
  Message m;
  m.set_uri_path("/3303/0/5700");
  CHECK(m.uri_path() == "/3303/0/5700");
  m.add_query("pmax", "3");
  CHECK(m.query("pmax") == "3");
  CHECK_FALSE(m.query("pmin").has_value());
  m.set_observe(0);
  CHECK(m.observe() == 0U);
}

// -- Messenger -----------------------------------------------------------------

namespace {

struct Pair {
  Scheduler clock;
  net::MemoryNetwork network{clock};
  std::unique_ptr<net::DatagramTransport> a_port = network.bind({"a", 1});
  std::unique_ptr<net::DatagramTransport> b_port = network.bind({"b", 1});
  Messenger a{clock, *a_port, 1};
  Messenger b{clock, *b_port, 2};
};

}  // namespace

TEST_CASE("messenger: CON request to a live responder gets the piggybacked response") {
  Pair p;
  p.b.on_request([](const net::Address&, const Message& req) {
    Message r;
    r.code = codes::kContent;
    r.set_payload("path=" + req.uri_path());
    return r;
  });
  Message req;
  req.code = codes::kGet;
  req.set_uri_path("/3303/0");
  std::optional<Outcome> got;
  p.a.request({"b", 1}, req, [&](const Outcome& o) { got = o; });
  p.clock.run_for(seconds(1));
  REQUIRE(got.has_value());
  REQUIRE(succeeded(*got));
  const auto& resp = std::get<Message>(*got);
  CHECK(resp.type == Type::Ack);
  CHECK(resp.code == codes::kContent);
  CHECK(resp.payload_string() == "path=/3303/0");
}

TEST_CASE("messenger: silent peer times out after 4 retransmissions on the backoff schedule") {
  Scheduler clock;
  net::MemoryNetwork network(clock);
  auto a_port = network.bind({"a", 1});
  auto silent = network.bind({"silent", 1});
  std::vector<double> arrivals;
  silent->set_receiver([&](const net::Address&, ByteView) { arrivals.push_back(to_seconds(clock.now() - kDefaultEpoch)); });
  Messenger a(clock, *a_port, 1);
  Message req;
  req.code = codes::kGet;
  std::optional<double> failed_at;
  std::optional<Failure> failure;
  a.request({"silent", 1}, req, [&](const Outcome& o) {
    failed_at = to_seconds(clock.now() - kDefaultEpoch);
    failure = std::get<Failure>(o);
  });
  clock.run_for(seconds(60));
  // Hand-derived: 2 s initial timeout, x1.5 backoff: sends at 0, 2, 5, 9.5, 16.25; final wait 10.125.
  CHECK(arrivals == std::vector<double>{0.0, 2.0, 5.0, 9.5, 16.25});
  REQUIRE(failure.has_value());
  CHECK(*failure == Failure::Timeout);
  CHECK(*failed_at == doctest::Approx(2 + 3 + 4.5 + 6.75 + 10.125));
  CHECK(a.stats().retransmissions == 4);
}

TEST_CASE("messenger: duplicate CON is answered from cache and delivered once") {
  Scheduler clock;
  net::MemoryNetwork network(clock);
  auto client_port = network.bind({"c", 1});
  auto server_port = network.bind({"s", 1});
  Messenger server(clock, *server_port, 3);
  int upcalls = 0;
  server.on_request([&](const net::Address&, const Message&) {
    ++upcalls;
    Message r;
    r.code = codes::kChanged;
    return r;
  });
  std::vector<Message> replies;
  client_port->set_receiver([&](const net::Address&, ByteView d) { replies.push_back(decode(d)); });

  Message req;
  req.type = Type::Con;
  req.code = codes::kPost;
  req.message_id = 77;
  req.token = {1, 2};
  const Bytes wire = encode(req);
  client_port->send({"s", 1}, wire);
  clock.run_for(seconds(10));
  client_port->send({"s", 1}, wire);
  clock.run_for(seconds(10));
  CHECK(upcalls == 1);
  REQUIRE(replies.size() == 2);
  CHECK(replies[0] == replies[1]);
  CHECK(replies[1].type == Type::Ack);
  CHECK(replies[1].message_id == 77);
  CHECK(server.stats().duplicates == 1);

  // Past the exchange lifetime the same id is a new message.
  clock.run_for(seconds(247));
  client_port->send({"s", 1}, wire);
  clock.run_for(seconds(1));
  CHECK(upcalls == 2);
}

TEST_CASE("messenger: unmatched responses go to the notification handler; rejection sends RST") {
  Pair p;
  std::vector<std::string> notes;
  bool accept = true;
  p.a.on_notification([&](const net::Address&, const Message& m) {
    notes.push_back(m.payload_string());
    return accept;
  });
  std::vector<Bytes> reset_tokens;
  p.b.on_reset([&](const net::Address&, const Bytes& token) { reset_tokens.push_back(token); });
  Message n;
  n.type = Type::Non;
  n.code = codes::kContent;
  n.token = {9, 9};
  n.set_observe(1);
  n.set_payload("22.5");
  p.b.send({"a", 1}, n);
  p.clock.run_for(seconds(1));
  accept = false;
  n.set_payload("23.0");
  p.b.send({"a", 1}, n);
  p.clock.run_for(seconds(1));
  CHECK(notes == std::vector<std::string>{"22.5", "23.0"});
  REQUIRE(reset_tokens.size() == 1);
  CHECK(reset_tokens[0] == Bytes{9, 9});
}

TEST_CASE("messenger: NON request without a response reports Timeout after the wait window") {
  Pair p;
  Message req;
  req.type = Type::Non;
  req.code = codes::kGet;
  std::optional<Outcome> got;
  p.b.on_request([](const net::Address&, const Message&) {
    Message r;
    r.code = codes::kContent;
    return r;
  });
  p.a.request({"b", 1}, req, [&](const Outcome& o) { got = o; });
  p.clock.run_for(seconds(1));
  REQUIRE(got.has_value());
  CHECK(succeeded(*got));
  CHECK(std::get<Message>(*got).type == Type::Non);

  got.reset();
  p.a.request({"nobody", 1}, req, [&](const Outcome& o) { got = o; });
  p.clock.run_for(seconds(5));
  REQUIRE(got.has_value());
  CHECK(std::get<Failure>(*got) == Failure::Timeout);
  CHECK(p.a.stats().retransmissions == 0);
}
