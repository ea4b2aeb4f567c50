#pragma once

#include <array>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>

#include "makesense/coap/message.hpp"
#include "makesense/common/random.hpp"
#include "makesense/common/scheduler.hpp"
#include "makesense/net/transport.hpp"

namespace makesense::coap {

enum class Failure { Timeout, Reset, TransportError };

const char* to_string(Failure f);

/// Either the matched response or the reason the exchange failed.
using Outcome = std::variant<Message, Failure>;

inline bool succeeded(const Outcome& o) { return std::holds_alternative<Message>(o); }

struct TransmissionParams {
  Duration ack_timeout{2000};
  double backoff_factor = 1.5;
  int max_retransmit = 4;
  Duration exchange_lifetime{247000};
  /// How long a NON request waits for a response before reporting Timeout.
  Duration non_response_wait{2000};
};

/// Request/response + observe messaging over one datagram transport.
///
/// Outgoing CON requests are retransmitted with exponential backoff and matched
/// to responses by token. Inbound CON/NON messages are deduplicated per
/// (source, message id) for the exchange lifetime; duplicate requests get the
/// cached response re-sent and are never passed upward twice.
class Messenger {
 public:
  using ResponseCallback = std::function<void(const Outcome&)>;
  /// Produces the response (code, options, payload); type, id and token are filled in.
  using RequestHandler = std::function<Message(const net::Address& from, const Message& request)>;
  /// Unmatched responses, i.e. observe notifications. Return false to reject (RST).
  using NotificationHandler = std::function<bool(const net::Address& from, const Message& msg)>;
  /// A peer answered one of our NON messages with RST.
  using ResetHandler = std::function<void(const net::Address& from, const Bytes& token)>;

  struct Stats {
    std::uint64_t sent = 0;
    std::uint64_t received = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t timeouts = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t malformed = 0;
  };

  Messenger(Scheduler& scheduler, net::DatagramTransport& transport, std::optional<std::uint64_t> seed = std::nullopt,
            TransmissionParams params = {});
  ~Messenger();
  Messenger(const Messenger&) = delete;
  Messenger& operator=(const Messenger&) = delete;

  /// Sends a CON or NON request. Assigns message id and, if empty, a token.
  void request(const net::Address& to, Message msg, ResponseCallback on_done = {});
  /// Sends a message without tracking a response (notifications).
  void send(const net::Address& to, Message msg);

  void on_request(RequestHandler handler);
  void on_notification(NotificationHandler handler);
  void on_reset(ResetHandler handler);

  /// Drops dedup state for a peer whose session restarted (its message ids restart too).
  void forget_peer(const net::Address& peer);
  /// Fails every outstanding exchange with TransportError and cancels timers.
  void abort_all();

  Bytes new_token();
  std::uint16_t next_message_id();

  Stats stats() const;
  const TransmissionParams& params() const { return params_; }
  net::DatagramTransport& transport() { return transport_; }

 private:
  struct Pending {
    net::Address peer;
    Bytes token;
    std::uint16_t message_id = 0;
    Bytes wire;
    Duration timeout{};
    int retransmits = 0;
    bool confirmable = true;
    bool acknowledged = false;
    Scheduler::TimerId timer = 0;
    ResponseCallback on_done;
  };

  struct DedupEntry {
    TimePoint expires;
    Bytes response;  // cached wire reply, empty if none yet
  };
  struct PeerDedup {
    std::unordered_map<std::uint16_t, DedupEntry> entries;
    std::deque<std::pair<TimePoint, std::uint16_t>> order;
  };

  struct SentNon {
    bool valid = false;
    std::uint16_t message_id = 0;
    net::Address peer;
    Bytes token;
  };

  static std::string key(const net::Address& peer, ByteView token);
  static std::string mid_key(const net::Address& peer, std::uint16_t mid);

  void receive(const net::Address& from, ByteView datagram);
  void handle_ack(const net::Address& from, const Message& msg);
  void handle_request(const net::Address& from, const Message& msg);
  void handle_response(const net::Address& from, const Message& msg);
  /// True if (from, mid) was already seen; re-sends the cached reply.
  bool is_duplicate(const net::Address& from, const Message& msg);
  void cache_reply(const net::Address& from, std::uint16_t mid, const Bytes& wire);
  void on_timer(const std::string& pending_key);
  void complete(const std::string& pending_key, const Outcome& outcome);
  void transmit(const net::Address& to, const Bytes& wire);
  void send_empty(const net::Address& to, Type type, std::uint16_t mid);

  Scheduler& scheduler_;
  net::DatagramTransport& transport_;
  TransmissionParams params_;
  RandomSource rng_;

  mutable std::recursive_mutex mu_;
  std::uint16_t next_mid_;
  std::uint64_t token_salt_;
  std::uint32_t token_counter_ = 0;
  std::unordered_map<std::string, Pending> pending_;
  std::unordered_map<std::string, std::string> by_mid_;  // key(peer, mid) -> pending key
  std::unordered_map<net::Address, PeerDedup, net::AddressHash> dedup_;
  std::array<SentNon, 1024> sent_non_{};
  RequestHandler request_handler_;
  NotificationHandler notification_handler_;
  ResetHandler reset_handler_;
  Stats stats_;
};

}  // namespace makesense::coap
