#pragma once

#include <memory>
#include <mutex>
#include <random>
#include <unordered_map>

#include "makesense/common/scheduler.hpp"
#include "makesense/net/transport.hpp"

namespace makesense::net {

/// In-process datagram fabric on top of a Scheduler. Lossless with zero latency
/// by default, so virtual-clock runs are exact.
class MemoryNetwork {
 public:
  struct Options {
    Duration latency{0};
    double loss = 0.0;
    std::uint64_t seed = 1;
  };

  struct Stats {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_unbound = 0;
    std::uint64_t dropped_loss = 0;
  };

  explicit MemoryNetwork(Scheduler& scheduler) : MemoryNetwork(scheduler, Options{}) {}
  MemoryNetwork(Scheduler& scheduler, Options options);
  MemoryNetwork(const MemoryNetwork&) = delete;
  MemoryNetwork& operator=(const MemoryNetwork&) = delete;

  /// Throws Error if the address is already bound.
  std::unique_ptr<DatagramTransport> bind(const Address& address);

  Stats stats() const;
  Scheduler& scheduler() { return scheduler_; }

 private:
  class Port;
  friend class Port;

  void send(const Address& from, const Address& to, ByteView data);
  void unbind(const Address& address);

  Scheduler& scheduler_;
  Options options_;
  mutable std::mutex mu_;
  std::unordered_map<Address, Port*, AddressHash> ports_;
  std::mt19937_64 loss_rng_;
  Stats stats_;
};

}  // namespace makesense::net
