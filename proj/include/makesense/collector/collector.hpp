#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "makesense/broker/broker.hpp"
#include "makesense/collector/events.hpp"
#include "makesense/collector/identity.hpp"
#include "makesense/lwm2m/server.hpp"

namespace makesense::collector {

/// Line-delimited JSON quarantine for payloads the pipeline could not use.
class DeadLetterLog {
 public:
  explicit DeadLetterLog(std::optional<std::filesystem::path> file = std::nullopt);

  void add(const std::string& pseudonym, const std::string& reason, std::string_view payload);
  std::uint64_t count() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::ofstream> out_;
  std::uint64_t count_ = 0;
};

struct ControlPlaneOptions {
  std::string queue = "collector.control";
  Duration default_period{1000};
  /// Per-object overrides, e.g. slower energy channels.
  std::map<int, Duration> object_periods;
  int observe_attempts = 3;
  Duration retry_backoff{2000};
  bool time_sync = true;
  Duration resync_min_interval{60000};
};

struct ControlPlaneStats {
  std::uint64_t events = 0;
  std::uint64_t observations_started = 0;
  std::uint64_t observations_cancelled = 0;
  std::uint64_t observe_failures = 0;
  std::uint64_t observe_given_up = 0;
  std::uint64_t time_syncs = 0;
};

/// Reacts to registration events: keeps each registered endpoint's observation
/// set equal to its advertised sensor paths minus the blacklist, and
/// synchronizes the device clock once observations are requested.
class ControlPlane {
 public:
  ControlPlane(Scheduler& scheduler, broker::Broker& broker, lwm2m::Server& server, Blacklist& blacklist,
               ControlPlaneOptions options);
  ~ControlPlane();

  void start();
  void stop();

  /// Paths that should be observed on `endpoint` given its registration and the blacklist.
  std::vector<lwm2m::Path> desired(const std::string& endpoint) const;
  /// Starts missing observations and cancels unwanted ones.
  void reconcile(const std::string& endpoint);
  /// Writes the server clock into the device (rate-limited unless forced).
  void sync_time(const std::string& endpoint, bool force = false);
  Duration period_for(int object_id) const;

  ControlPlaneStats stats() const { return stats_; }

 private:
  void handle(const ControlEvent& ev);
  void start_observation(const std::string& endpoint, const lwm2m::Path& path, int attempt);

  Scheduler& scheduler_;
  broker::Broker& broker_;
  lwm2m::Server& server_;
  Blacklist& blacklist_;
  ControlPlaneOptions options_;
  broker::Broker::ConsumerId consumer_ = 0;
  std::shared_ptr<bool> alive_;
  std::unordered_map<std::string, std::string> handled_;  // endpoint -> registration id
  std::unordered_map<std::string, TimePoint> last_sync_;
  std::set<Scheduler::TimerId> retries_;
  ControlPlaneStats stats_;
};

struct CollectorWorkerOptions {
  std::string queue = "collector.raw";
  std::string default_site = "site";
  Duration ack_interval{200};
  std::size_t prefetch = 20000;
  Duration drift_threshold{2000};
};

struct CollectorWorkerStats {
  std::uint64_t deliveries = 0;
  std::uint64_t records = 0;
  std::uint64_t published = 0;
  std::uint64_t dead_lettered = 0;
  std::uint64_t drift_detected = 0;
};

/// Turns raw notifications into pseudonymized readings on "live.<pseudonym>.<object>".
/// Acks are batched, so a killed worker leaves its last batch to be redelivered.
class CollectorWorker {
 public:
  using DriftHandler = std::function<void(const std::string& endpoint)>;

  CollectorWorker(Scheduler& scheduler, broker::Broker& broker, PseudonymTable& pseudonyms, DeadLetterLog& dead,
                  CollectorWorkerOptions options, DriftHandler on_drift = {});
  ~CollectorWorker();

  void start();
  /// Abrupt stop: pending acks are forgotten.
  void kill();
  void stop();
  bool running() const { return consumer_ != 0; }

  /// Processes one raw body received at `received`; returns the readings published.
  std::size_t process(std::string_view body, TimePoint received);

  const CollectorWorkerStats& stats() const { return stats_; }

 private:
  void flush_acks();

  Scheduler& scheduler_;
  broker::Broker& broker_;
  PseudonymTable& pseudonyms_;
  DeadLetterLog& dead_;
  CollectorWorkerOptions options_;
  DriftHandler on_drift_;
  broker::Broker::ConsumerId consumer_ = 0;
  Scheduler::TimerId timer_ = 0;
  std::vector<std::uint64_t> pending_acks_;
  CollectorWorkerStats stats_;
};

}  // namespace makesense::collector
