#pragma once

#include <vector>

#include "makesense/broker/broker.hpp"
#include "makesense/datastore/live_window.hpp"
#include "makesense/datastore/store.hpp"

namespace makesense::datastore {

struct StorageWorkerStats {
  std::uint64_t received = 0;
  std::uint64_t stored = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t undecodable = 0;
  std::uint64_t flushes = 0;
};

/// Consumes encoded readings from a broker queue into the historical store.
/// Deliveries are buffered and written once per flush interval; acks go out
/// only after the store has flushed, so a crash loses nothing the broker will
/// not redeliver.
class StorageWorker {
 public:
  struct Options {
    std::string queue;
    Duration flush_interval{1000};
    std::size_t prefetch = 50000;
  };

  StorageWorker(Scheduler& scheduler, broker::Broker& broker, HistoricalStore& store, LiveWindow* live,
                Options options);
  ~StorageWorker();

  void start();
  /// Abrupt stop: the unflushed batch is discarded without acks.
  void kill();
  /// Graceful stop: flushes and acks what it holds.
  void stop();
  bool running() const { return consumer_ != 0; }
  void flush();

  const StorageWorkerStats& stats() const { return stats_; }

 private:
  void arm();

  Scheduler& scheduler_;
  broker::Broker& broker_;
  HistoricalStore& store_;
  LiveWindow* live_;
  Options options_;
  broker::Broker::ConsumerId consumer_ = 0;
  Scheduler::TimerId timer_ = 0;
  std::vector<broker::Delivery> batch_;
  StorageWorkerStats stats_;
};

}  // namespace makesense::datastore
