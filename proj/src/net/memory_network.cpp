#include "makesense/net/memory_network.hpp"

#include "makesense/common/error.hpp"

namespace makesense::net {

class MemoryNetwork::Port final : public DatagramTransport {
 public:
  Port(MemoryNetwork& net, Address address) : net_(net), address_(std::move(address)) {}
  ~Port() override { net_.unbind(address_); }

  void send(const Address& to, ByteView datagram) override { net_.send(address_, to, datagram); }
  void set_receiver(Receiver receiver) override {
    std::lock_guard lock(net_.mu_);
    receiver_ = std::move(receiver);
  }
  const Address& local_address() const override { return address_; }

  Receiver receiver_;

 private:
  MemoryNetwork& net_;
  Address address_;
};

MemoryNetwork::MemoryNetwork(Scheduler& scheduler, Options options)
    : scheduler_(scheduler), options_(options), loss_rng_(options.seed) {}

std::unique_ptr<DatagramTransport> MemoryNetwork::bind(const Address& address) {
  std::lock_guard lock(mu_);
  if (ports_.contains(address)) throw Error("address already bound: " + address.to_string());
  auto port = std::make_unique<Port>(*this, address);
  ports_.emplace(address, port.get());
  return port;
}

void MemoryNetwork::unbind(const Address& address) {
  std::lock_guard lock(mu_);
  ports_.erase(address);
}

void MemoryNetwork::send(const Address& from, const Address& to, ByteView data) {
  {
    std::lock_guard lock(mu_);
    ++stats_.sent;
    if (options_.loss > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(loss_rng_) < options_.loss) {
      ++stats_.dropped_loss;
      return;
    }
  }
  scheduler_.after(options_.latency, [this, from, to, payload = Bytes(data.begin(), data.end())] {
    DatagramTransport::Receiver receiver;
    {
      std::lock_guard lock(mu_);
      auto it = ports_.find(to);
      if (it == ports_.end() || !it->second->receiver_) {
        ++stats_.dropped_unbound;
        return;
      }
      receiver = it->second->receiver_;
      ++stats_.delivered;
    }
    receiver(from, payload);
  });
}

MemoryNetwork::Stats MemoryNetwork::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace makesense::net
