#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "makesense/common/bytes.hpp"

namespace makesense::net {

/// Transport address of a datagram peer.
struct Address {
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const;
  /// "host:port"; throws Error on malformed input.
  static Address parse(std::string_view text);

  auto operator<=>(const Address&) const = default;
};

struct AddressHash {
  std::size_t operator()(const Address& a) const noexcept {
    return std::hash<std::string>{}(a.host) ^ (static_cast<std::size_t>(a.port) * 0x9e3779b97f4a7c15ULL);
  }
};

/// Unreliable datagram channel. `send` never blocks on the peer; delivery is
/// best effort. The receiver is invoked on the owning scheduler's loop thread.
class DatagramTransport {
 public:
  using Receiver = std::function<void(const Address& from, ByteView datagram)>;

  virtual ~DatagramTransport() = default;
  virtual void send(const Address& to, ByteView datagram) = 0;
  virtual void set_receiver(Receiver receiver) = 0;
  virtual const Address& local_address() const = 0;
};

}  // namespace makesense::net
