#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "makesense/common/scheduler.hpp"
#include "makesense/net/transport.hpp"

namespace makesense::net {

/// IPv4 UDP sockets serviced by one background poll thread. Received
/// datagrams are handed to the scheduler loop, never to the poll thread.
class UdpReactor {
 public:
  explicit UdpReactor(Scheduler& scheduler);
  ~UdpReactor();
  UdpReactor(const UdpReactor&) = delete;
  UdpReactor& operator=(const UdpReactor&) = delete;

  /// Port 0 binds an ephemeral port. Throws Error on socket failures.
  std::unique_ptr<DatagramTransport> bind(const Address& address);

 private:
  class Socket;
  friend class Socket;

  void loop();
  void remove(Socket* socket);

  Scheduler& scheduler_;
  std::mutex mu_;
  std::vector<Socket*> sockets_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

}  // namespace makesense::net
