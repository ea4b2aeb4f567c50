#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "makesense/analytics/comfort.hpp"
#include "makesense/analytics/presence.hpp"
#include "makesense/analytics/quality.hpp"
#include "makesense/broker/broker.hpp"
#include "makesense/collector/collector.hpp"
#include "makesense/collector/events.hpp"
#include "makesense/collector/identity.hpp"
#include "makesense/collector/supervisor.hpp"
#include "makesense/datastore/diary.hpp"
#include "makesense/datastore/live_window.hpp"
#include "makesense/datastore/storage_worker.hpp"
#include "makesense/datastore/store.hpp"
#include "makesense/fota/image.hpp"
#include "makesense/fota/service.hpp"
#include "makesense/lwm2m/registry.hpp"
#include "makesense/lwm2m/server.hpp"
#include "makesense/secure/endpoint.hpp"

namespace makesense::gateway {

struct TestbedOptions {
  std::filesystem::path data_dir;
  std::optional<std::uint64_t> seed;
  std::string default_site = "site";
  bool secure = true;
  std::size_t collector_workers = 2;
  std::size_t storage_workers = 2;
  collector::ControlPlaneOptions control;
  collector::Supervisor::Options supervisor;
  coap::TransmissionParams params;
  std::size_t live_capacity = 600;
  Duration storage_flush{1000};
  bool analytics = true;
  analytics::ComfortConfig comfort;
  bool fsync = false;
};

/// Counters behind the pipeline accounting identity.
struct Accounting {
  std::uint64_t notifications = 0;  // raw messages the server accepted
  std::uint64_t processed = 0;      // records parsed by collectors, redeliveries included
  std::uint64_t published = 0;      // pseudonymized readings put on the live exchange
  std::uint64_t dead_lettered = 0;
  std::uint64_t dedup = 0;          // store duplicates
  std::uint64_t stored = 0;
};

/// One live reading as seen by stream subscribers.
using ReadingListener = std::function<void(const datastore::SensorReading&)>;

/// The backend: secure CoAP endpoint, LWM2M server, broker, collectors,
/// storage, FOTA and analytics, all driven by one scheduler.
///
/// Layout under data_dir:
///   segments/           historical store
///   secure/             pseudonym table, blacklist, PSK table (mode 0700)
///   firmware/           image store
///   deadletter.jsonl, notifications.jsonl, diary.jsonl
class Testbed {
 public:
  Testbed(Scheduler& scheduler, net::DatagramTransport& port, TestbedOptions options);
  ~Testbed();
  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  Scheduler& scheduler() { return scheduler_; }
  const TestbedOptions& options() const { return options_; }
  secure::KeyStore& keys() { return keys_; }
  lwm2m::Registry& registry() { return registry_; }
  lwm2m::Server& server() { return *server_; }
  broker::Broker& broker() { return broker_; }
  collector::PseudonymTable& pseudonyms() { return pseudonyms_; }
  collector::Blacklist& blacklist() { return blacklist_; }
  collector::DeadLetterLog& dead_letters() { return dead_; }
  collector::ControlPlane& control() { return *control_; }
  collector::Supervisor& supervisor() { return supervisor_; }
  datastore::HistoricalStore& store() { return store_; }
  datastore::LiveWindow& live() { return live_; }
  datastore::DiaryStore& diary() { return diary_; }
  fota::ImageStore& images() { return images_; }
  fota::FotaService& fota() { return *fota_; }
  analytics::ComfortEngine& comfort() { return comfort_; }
  analytics::PresenceTracker& presence() { return presence_; }
  analytics::NotificationSink& notifications() { return notifications_; }
  const secure::SecureServer* secure_server() const { return secure_.get(); }

  std::size_t collector_count() const { return collectors_.size(); }
  std::size_t storage_count() const { return storers_.size(); }
  collector::CollectorWorker& collector_worker(std::size_t i) { return *collectors_.at(i); }
  datastore::StorageWorker& storage_worker(std::size_t i) { return *storers_.at(i); }
  static std::string collector_name(std::size_t i) { return "collector-" + std::to_string(i); }
  static std::string storage_name(std::size_t i) { return "storage-" + std::to_string(i); }

  /// Writes buffered storage batches to the store.
  void flush();
  Accounting accounting() const;

  /// Comfort events in firing order.
  std::vector<analytics::ComfortEvent> comfort_events() const;
  /// "desk-N" is served by the egg named "egg-N" in the default site.
  static std::string desk_of(const std::string& device);
  static std::string egg_of(const std::string& desk);

  /// Registers a listener for every live reading (called on the loop).
  std::uint64_t subscribe(ReadingListener l);
  void unsubscribe(std::uint64_t id);

  /// Pseudonym of a raw endpoint, if it has ever reported.
  std::optional<std::string> pseudonym_of(const std::string& endpoint) const;
  /// Token of a raw site name.
  std::string site_token(const std::string& site);

  /// Window data for quality checks: egg (device name) -> object -> values.
  analytics::QualityInput quality_input(const std::string& site, TimePoint t0, TimePoint t1,
                                        const std::vector<int>& objects);

  void stop();

 private:
  void on_live(const broker::Delivery& d);

  Scheduler& scheduler_;
  TestbedOptions options_;
  secure::KeyStore keys_;
  std::unique_ptr<secure::SecureServer> secure_;
  lwm2m::Registry registry_;
  std::unique_ptr<lwm2m::Server> server_;
  broker::Broker broker_;
  collector::PseudonymTable pseudonyms_;
  collector::Blacklist blacklist_;
  collector::DeadLetterLog dead_;
  std::unique_ptr<collector::ControlPlane> control_;
  collector::Supervisor supervisor_;
  datastore::HistoricalStore store_;
  datastore::LiveWindow live_;
  datastore::DiaryStore diary_;
  std::vector<std::unique_ptr<collector::CollectorWorker>> collectors_;
  std::vector<std::unique_ptr<datastore::StorageWorker>> storers_;
  fota::ImageStore images_;
  std::unique_ptr<fota::FotaService> fota_;
  analytics::ComfortEngine comfort_;
  analytics::PresenceTracker presence_;
  analytics::NotificationSink notifications_;
  std::vector<analytics::ComfortEvent> comfort_events_;
  broker::Broker::ConsumerId analytics_consumer_ = 0;
  std::map<std::uint64_t, ReadingListener> listeners_;
  std::uint64_t next_listener_ = 1;
  mutable std::mutex mu_;
  bool stopped_ = false;
};

}  // namespace makesense::gateway
