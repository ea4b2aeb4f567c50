#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>

#include "makesense/common/random.hpp"
#include "makesense/common/scheduler.hpp"
#include "makesense/net/transport.hpp"
#include "makesense/secure/psk.hpp"

namespace makesense::secure {

/// First byte of every datagram on a secured socket.
enum class Envelope : std::uint8_t { Alert = 0x15, Handshake = 0x16, Record = 0x17 };

enum class AlertCode : std::uint8_t { UnknownPskId = 1, AuthFailure = 2 };

struct SecurityStats {
  std::uint64_t handshakes = 0;
  std::uint64_t unknown_psk = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t integrity_failures = 0;
  std::uint64_t replays = 0;
  std::uint64_t unknown_session = 0;
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
  std::uint64_t dropped_no_session = 0;
};

/// Server side: accepts PSK handshakes from any peer and exposes the decrypted
/// plaintext as a DatagramTransport. Only records that pass AEAD verification
/// and the replay window are delivered upward.
class SecureServer final : public net::DatagramTransport {
 public:
  /// Called after a peer (re)establishes a session; its old message state is stale.
  using SessionListener = std::function<void(const net::Address& peer)>;

  SecureServer(net::DatagramTransport& lower, const KeyStore& keys, std::optional<std::uint64_t> seed = std::nullopt);
  ~SecureServer() override;

  void send(const net::Address& to, ByteView datagram) override;
  void set_receiver(Receiver receiver) override;
  const net::Address& local_address() const override { return lower_.local_address(); }

  void on_session(SessionListener listener);
  /// Forgets the session of a peer (e.g. after deregistration).
  void drop_peer(const net::Address& peer);
  std::size_t session_count() const;
  SecurityStats stats() const;

 private:
  struct Entry {
    SecureSession session;
    net::Address peer;
    Random32 client_random{};
    Bytes server_hello;  // cached for retransmitted ClientHellos
  };

  void receive(const net::Address& from, ByteView datagram);
  void handle_hello(const net::Address& from, ByteView body);
  void handle_record(const net::Address& from, ByteView record);
  void send_alert(const net::Address& to, AlertCode code);

  net::DatagramTransport& lower_;
  const KeyStore& keys_;
  RandomSource rng_;
  mutable std::mutex mu_;
  std::map<SessionId, std::shared_ptr<Entry>> sessions_;
  std::unordered_map<net::Address, SessionId, net::AddressHash> by_peer_;
  Receiver receiver_;
  SessionListener session_listener_;
  SecurityStats stats_;
};

struct HandshakeParams {
  Duration retry_interval{2000};
  int attempts = 3;
};

/// Client side: one session with one server.
class SecureClient final : public net::DatagramTransport {
 public:
  enum class Status { Connected, UnknownPskId, AuthFailure, Timeout };
  using ConnectCallback = std::function<void(Status)>;

  SecureClient(Scheduler& scheduler, net::DatagramTransport& lower, net::Address server, PskIdentity identity,
               std::optional<std::uint64_t> seed = std::nullopt, HandshakeParams params = {});
  ~SecureClient() override;

  /// Starts a fresh handshake, discarding any current session.
  void connect(ConnectCallback on_done);
  /// Forgets the session (crash / reboot).
  void reset();
  bool connected() const;

  void send(const net::Address& to, ByteView datagram) override;
  void set_receiver(Receiver receiver) override;
  const net::Address& local_address() const override { return lower_.local_address(); }

  const net::Address& server() const { return server_; }
  SecurityStats stats() const;

 private:
  void receive(const net::Address& from, ByteView datagram);
  void send_hello();
  void finish(Status status);

  Scheduler& scheduler_;
  net::DatagramTransport& lower_;
  net::Address server_;
  PskIdentity identity_;
  RandomSource rng_;
  HandshakeParams params_;

  mutable std::mutex mu_;
  std::optional<SecureSession> session_;
  std::optional<ClientHello> pending_hello_;
  int attempts_left_ = 0;
  Scheduler::TimerId retry_timer_ = 0;
  ConnectCallback on_connect_;
  Receiver receiver_;
  SecurityStats stats_;
};

const char* to_string(SecureClient::Status s);

}  // namespace makesense::secure
