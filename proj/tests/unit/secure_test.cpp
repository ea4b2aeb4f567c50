#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "makesense/net/memory_network.hpp"
#include "makesense/secure/endpoint.hpp"
#include "support/generators.hpp"

using namespace makesense;
using namespace makesense::secure;

namespace {

Key128 key_of(std::uint8_t fill) {
  Key128 k;
  k.fill(fill);
  return k;
}

PskIdentity identity(const std::string& id, std::uint8_t fill) { return testing::test_identity(id, fill); }

testing::SessionPair handshake(const PskIdentity& id, const KeyStore& store) { return testing::handshake(id, store); }

}  // namespace

TEST_CASE("hmac and hkdf match published test vectors") {
  // RFC 4231 test case 2.
  const Mac32 mac = hmac_sha256(as_bytes("Jefe"), as_bytes("what do ya want for nothing?"));
  CHECK(to_hex(ByteView(mac.data(), mac.size())) ==
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
  // RFC 5869 test case 1.
  const Bytes ikm(22, 0x0b);
  const Bytes salt = from_hex("000102030405060708090a0b0c");
  const Bytes info = from_hex("f0f1f2f3f4f5f6f7f8f9");
  CHECK(to_hex(hkdf_sha256(salt, ikm, info, 42)) ==
        "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865");
}

TEST_CASE("psk identity validation") {
  const Key128 k = key_of(7);
  CHECK_NOTHROW(PskIdentity::make("egg-001", ByteView(k.data(), 16)));
  CHECK_THROWS_AS(PskIdentity::make("", ByteView(k.data(), 16)), Error);
  CHECK_THROWS_AS(PskIdentity::make(std::string(65, 'a'), ByteView(k.data(), 16)), Error);
  CHECK_THROWS_AS(PskIdentity::make("bad\nid", ByteView(k.data(), 16)), Error);
  CHECK_THROWS_AS(PskIdentity::make("egg", ByteView(k.data(), 15)), Error);
}

TEST_CASE("handshake: both sides derive the same keys and exchange records") {
  KeyStore store;
  const auto id = identity("egg-001", 0x42);
  store.add(id);
  auto s = handshake(id, store);
  CHECK(s.client.keys() == s.server.keys());
  CHECK(s.client.keys().client_to_server != s.client.keys().server_to_client);
  CHECK(to_string(s.server.open(s.client.seal(as_bytes("up")))) == "up");
  CHECK(to_string(s.client.open(s.server.seal(as_bytes("down")))) == "down");
}

TEST_CASE("handshake: wrong psk and unknown id fail without a session") {
  KeyStore store;
  store.add(identity("egg-001", 0x42));
  Random32 r{};
  SessionId sid{};
  const ClientHello wrong = make_client_hello(r, identity("egg-001", 0x43));
  CHECK_THROWS_AS(accept_client_hello(wrong, store, r, sid), AuthFailure);
  const ClientHello unknown = make_client_hello(r, identity("egg-999", 0x42));
  CHECK_THROWS_AS(accept_client_hello(unknown, store, r, sid), UnknownPskId);

  // A server hello from a peer that does not hold the psk is rejected by the client.
  const auto id = identity("egg-001", 0x42);
  const ClientHello hello = make_client_hello(r, id);
  ServerAccept acc = accept_client_hello(hello, store, r, sid);
  acc.hello.mac[0] ^= 1;
  CHECK_THROWS_AS(finish_handshake(hello, id, acc.hello), AuthFailure);
}

TEST_CASE("record layout and sequence numbering") {
  KeyStore store;
  const auto id = identity("egg-001", 0x42);
  store.add(id);
  auto s = handshake(id, store);
  const Bytes r0 = s.client.seal(as_bytes("abc"));
  const Bytes r1 = s.client.seal(as_bytes("abc"));
  CHECK(r0.size() == kRecordHeaderSize + 3 + kTagSize);
  CHECK(SecureSession::peek_session_id(r0) == s.client.id());
  CHECK(SecureSession::peek_sequence(r0) == 0);
  CHECK(SecureSession::peek_sequence(r1) == 1);
  CHECK(r0 != r1);  // distinct nonces
}

TEST_CASE("any single-bit tamper of a record is rejected") {
  KeyStore store;
  const auto id = identity("egg-001", 0x42);
  store.add(id);
  auto s = handshake(id, store);
  const Bytes record = s.client.seal(as_bytes("temperature=22.5"));
  for (std::size_t bit = 0; bit < record.size() * 8; ++bit) {
    Bytes t = record;
    t[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
    CHECK_THROWS_AS(s.server.open(t), SecurityError);
  }
  // The untouched record still opens: failed attempts consumed nothing.
  CHECK(to_string(s.server.open(record)) == "temperature=22.5");
}

TEST_CASE("replay window: hand-derived schedules") {
  ReplayWindow w;
  for (std::uint64_t seq : {5, 3, 4}) {
    CHECK(w.acceptable(seq));
    w.mark(seq);
  }
  CHECK_FALSE(w.acceptable(4));
  CHECK_FALSE(w.acceptable(5));
  CHECK(w.acceptable(0));

  ReplayWindow far;
  far.mark(100);
  CHECK_FALSE(far.acceptable(30));  // offset 70 is outside the 64-wide window
  CHECK_FALSE(far.acceptable(36));  // offset 64
  CHECK(far.acceptable(37));        // offset 63
  CHECK_FALSE(far.acceptable(100));
  CHECK(far.acceptable(101));
}

TEST_CASE("property: duplicated and reordered delivery never double-delivers") {
  KeyStore store;
  const auto id = identity("egg-001", 0x42);
  store.add(id);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = handshake(id, store);
    const int n = 1 + static_cast<int>(rng() % 80);
    std::vector<Bytes> records;
    for (int i = 0; i < n; ++i) records.push_back(s.client.seal(as_bytes(std::to_string(i))));
    std::vector<int> schedule;
    for (int i = 0; i < n; ++i) {
      const int copies = 1 + static_cast<int>(rng() % 3);
      for (int c = 0; c < copies; ++c) schedule.push_back(i);
    }
    // Local shuffles keep most records inside the window.
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      const std::size_t j = std::min(schedule.size() - 1, i + static_cast<std::size_t>(rng() % 8));
      std::swap(schedule[i], schedule[j]);
    }
    std::multiset<std::string> delivered;
    // Oracle: a record is accepted iff unseen and its sequence is within 64 of the highest seen so far.
    std::set<int> seen;
    int highest = -1;
    for (int idx : schedule) {
      const bool expect = !seen.count(idx) && (highest < 0 || idx > highest || highest - idx < 64);
      bool got = true;
      try {
        delivered.insert(to_string(s.server.open(records[static_cast<std::size_t>(idx)])));
      } catch (const ReplayError&) {
        got = false;
      }
      REQUIRE(got == expect);
      if (got) {
        seen.insert(idx);
        highest = std::max(highest, idx);
      }
    }
    for (const auto& p : delivered) REQUIRE(delivered.count(p) == 1);
  }
}

TEST_CASE("endpoint: client and server exchange datagrams over the secured channel") {
  Scheduler clock;
  net::MemoryNetwork network(clock);
  auto server_port = network.bind({"server", 5684});
  auto client_port = network.bind({"egg", 1});
  KeyStore store;
  const auto id = identity("egg-001", 0x42);
  store.add(id);
  SecureServer server(*server_port, store, 1);
  SecureClient client(clock, *client_port, {"server", 5684}, id, 2);
  std::vector<std::string> at_server, at_client;
  int sessions = 0;
  server.on_session([&](const net::Address&) { ++sessions; });
  server.set_receiver([&](const net::Address& from, ByteView d) {
    at_server.push_back(to_string(d));
    server.send(from, as_bytes("ack:" + to_string(d)));
  });
  client.set_receiver([&](const net::Address&, ByteView d) { at_client.push_back(to_string(d)); });
  std::optional<SecureClient::Status> status;
  client.connect([&](SecureClient::Status s) { status = s; });
  clock.run_for(seconds(1));
  REQUIRE(status == SecureClient::Status::Connected);
  client.send({"server", 5684}, as_bytes("hello"));
  clock.run_for(seconds(1));
  CHECK(at_server == std::vector<std::string>{"hello"});
  CHECK(at_client == std::vector<std::string>{"ack:hello"});
  CHECK(sessions == 1);
  CHECK(server.session_count() == 1);

  // Raw plaintext injected into the server socket never reaches the application.
  client_port->send({"server", 5684}, as_bytes("\x17plain"));
  clock.run_for(seconds(1));
  CHECK(at_server.size() == 1);
}

TEST_CASE("endpoint: wrong psk reports AuthFailure, unknown id reports UnknownPskId, no server reports Timeout") {
  Scheduler clock;
  net::MemoryNetwork network(clock);
  auto server_port = network.bind({"server", 5684});
  KeyStore store;
  store.add(identity("egg-001", 0x42));
  SecureServer server(*server_port, store, 1);
  server.set_receiver([](const net::Address&, ByteView) {});

  auto run = [&](const net::Address& target, const PskIdentity& id) {
    auto port = network.bind({"egg", static_cast<std::uint16_t>(network.stats().sent % 60000 + 1)});
    SecureClient client(clock, *port, target, id, 5);
    std::optional<SecureClient::Status> status;
    client.connect([&](SecureClient::Status s) { status = s; });
    clock.run_for(seconds(30));
    CHECK_FALSE(client.connected());
    return status;
  };
  CHECK(run({"server", 5684}, identity("egg-001", 0x41)) == SecureClient::Status::AuthFailure);
  CHECK(run({"server", 5684}, identity("egg-404", 0x42)) == SecureClient::Status::UnknownPskId);
  CHECK(run({"nowhere", 5684}, identity("egg-001", 0x42)) == SecureClient::Status::Timeout);
  CHECK(server.session_count() == 0);
}
