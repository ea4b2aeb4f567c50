#include "makesense/net/udp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "makesense/common/error.hpp"

namespace makesense::net {

namespace {

sockaddr_in resolve(const Address& address) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(address.port);
  if (address.host.empty() || address.host == "0.0.0.0" || address.host == "*") {
    sa.sin_addr.s_addr = htonl(INADDR_ANY);
    return sa;
  }
  if (inet_pton(AF_INET, address.host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(address.host.c_str(), nullptr, &hints, &result) != 0 || result == nullptr)
    throw Error("cannot resolve host: " + address.host);
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(result->ai_addr)->sin_addr;
  freeaddrinfo(result);
  return sa;
}

Address to_address(const sockaddr_in& sa) {
  char buf[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
  return Address{buf, ntohs(sa.sin_port)};
}

}  // namespace

class UdpReactor::Socket final : public DatagramTransport {
 public:
  Socket(UdpReactor& reactor, int fd, Address local) : reactor_(reactor), fd_(fd), local_(std::move(local)) {}
  ~Socket() override {
    reactor_.remove(this);
    ::close(fd_);
  }

  void send(const Address& to, ByteView datagram) override {
    const sockaddr_in sa = resolve(to);
    // Best effort: errors surface as loss, exactly like a dropped datagram.
    (void)::sendto(fd_, datagram.data(), datagram.size(), 0, reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
  }
  void set_receiver(Receiver receiver) override {
    std::lock_guard lock(mu_);
    receiver_ = std::make_shared<Receiver>(std::move(receiver));
  }
  const Address& local_address() const override { return local_; }

  int fd() const { return fd_; }
  std::shared_ptr<Receiver> receiver() {
    std::lock_guard lock(mu_);
    return receiver_;
  }

 private:
  UdpReactor& reactor_;
  int fd_;
  Address local_;
  std::mutex mu_;
  std::shared_ptr<Receiver> receiver_;
};

UdpReactor::UdpReactor(Scheduler& scheduler) : scheduler_(scheduler), thread_([this] { loop(); }) {}

UdpReactor::~UdpReactor() {
  stop_ = true;
  thread_.join();
}

std::unique_ptr<DatagramTransport> UdpReactor::bind(const Address& address) {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  const sockaddr_in sa = resolve(address);
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error("bind " + address.to_string() + ": " + std::strerror(err));
  }
  sockaddr_in actual{};
  socklen_t len = sizeof actual;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&actual), &len);
  Address local = to_address(actual);
  if (local.host == "0.0.0.0") local.host = "127.0.0.1";
  auto socket = std::make_unique<Socket>(*this, fd, local);
  std::lock_guard lock(mu_);
  sockets_.push_back(socket.get());
  return socket;
}

void UdpReactor::remove(Socket* socket) {
  std::lock_guard lock(mu_);
  std::erase(sockets_, socket);
}

void UdpReactor::loop() {
  std::vector<std::uint8_t> buffer(65536);
  while (!stop_) {
    std::vector<pollfd> fds;
    {
      std::lock_guard lock(mu_);
      for (auto* s : sockets_) fds.push_back(pollfd{s->fd(), POLLIN, 0});
    }
    if (fds.empty()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      continue;
    }
    if (::poll(fds.data(), fds.size(), 50) <= 0) continue;
    for (const auto& p : fds) {
      if (!(p.revents & POLLIN)) continue;
      sockaddr_in from{};
      socklen_t len = sizeof from;
      const auto n = ::recvfrom(p.fd, buffer.data(), buffer.size(), MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&from), &len);
      if (n < 0) continue;
      std::shared_ptr<DatagramTransport::Receiver> receiver;
      {
        std::lock_guard lock(mu_);
        auto it = std::find_if(sockets_.begin(), sockets_.end(), [&](Socket* s) { return s->fd() == p.fd; });
        if (it == sockets_.end()) continue;
        receiver = (*it)->receiver();
      }
      if (!receiver || !*receiver) continue;
      scheduler_.post([receiver, sender = to_address(from), data = Bytes(buffer.begin(), buffer.begin() + n)] {
        (*receiver)(sender, data);
      });
    }
  }
}

}  // namespace makesense::net
