#include "makesense/gateway/testbed.hpp"

#include "json.hpp"
#include "makesense/collector/identity.hpp"
#include "makesense/datastore/reading.hpp"

namespace makesense::gateway {

namespace fs = std::filesystem;

namespace {

constexpr int kBeaconObject = 27000;
constexpr const char* kAnalyticsQueue = "analytics.live";
constexpr const char* kStoreQueue = "store.live";
constexpr const char* kRawQueue = "collector.raw";

TestbedOptions prepare(TestbedOptions o) {
  if (o.data_dir.empty()) throw Error("testbed needs a data directory");
  fs::create_directories(o.data_dir / "secure");
  fs::permissions(o.data_dir / "secure", fs::perms::owner_all, fs::perm_options::replace);
  fs::create_directories(o.data_dir / "segments");
  fs::create_directories(o.data_dir / "firmware");
  return o;
}

std::optional<std::uint64_t> derive(std::optional<std::uint64_t> seed, std::uint64_t salt) {
  if (!seed) return std::nullopt;
  return *seed * 0x9e3779b97f4a7c15ULL + salt;
}

}  // namespace

Testbed::Testbed(Scheduler& scheduler, net::DatagramTransport& port, TestbedOptions options)
    : scheduler_(scheduler),
      options_(prepare(std::move(options))),
      registry_(scheduler),
      broker_(scheduler),
      pseudonyms_(options_.data_dir / "secure" / "pseudonyms.json", derive(options_.seed, 1)),
      blacklist_(options_.data_dir / "secure" / "blacklist.json"),
      dead_(options_.data_dir / "deadletter.jsonl"),
      supervisor_(scheduler, options_.supervisor),
      store_({options_.data_dir / "segments", std::nullopt, options_.fsync}),
      live_(options_.live_capacity),
      diary_(options_.data_dir / "diary.jsonl"),
      images_(options_.data_dir / "firmware"),
      comfort_(options_.comfort),
      notifications_(options_.data_dir / "notifications.jsonl") {
  const auto key_file = options_.data_dir / "secure" / "keys.txt";
  if (fs::exists(key_file)) keys_.load(key_file.string());

  net::DatagramTransport* transport = &port;
  if (options_.secure) {
    secure_ = std::make_unique<secure::SecureServer>(port, keys_, derive(options_.seed, 2));
    transport = secure_.get();
  }
  server_ = std::make_unique<lwm2m::Server>(scheduler_, *transport, registry_, derive(options_.seed, 3), options_.params);
  if (secure_) secure_->on_session([this](const net::Address& peer) { server_->forget_peer(peer); });

  collector::bridge(registry_, *server_, broker_);

  broker_.declare_queue(kRawQueue, {1000000, seconds(30)});
  broker_.bind(broker::Exchange::LiveData, "raw.#", kRawQueue);
  broker_.declare_queue(kStoreQueue, {1000000, seconds(30)});
  broker_.bind(broker::Exchange::LiveData, "live.#", kStoreQueue);

  control_ = std::make_unique<collector::ControlPlane>(scheduler_, broker_, *server_, blacklist_, options_.control);
  control_->start();

  collector::CollectorWorkerOptions cw;
  cw.queue = kRawQueue;
  cw.default_site = options_.default_site;
  for (std::size_t i = 0; i < options_.collector_workers; ++i) {
    collectors_.push_back(std::make_unique<collector::CollectorWorker>(
        scheduler_, broker_, pseudonyms_, dead_, cw,
        [this](const std::string& ep) { control_->sync_time(ep); }));
    auto* w = collectors_.back().get();
    supervisor_.add(collector_name(i), [w] { w->start(); }, [w] { w->kill(); });
  }
  for (std::size_t i = 0; i < options_.storage_workers; ++i) {
    storers_.push_back(std::make_unique<datastore::StorageWorker>(
        scheduler_, broker_, store_, &live_, datastore::StorageWorker::Options{kStoreQueue, options_.storage_flush}));
    auto* w = storers_.back().get();
    supervisor_.add(storage_name(i), [w] { w->start(); }, [w] { w->kill(); });
  }

  fota_ = std::make_unique<fota::FotaService>(scheduler_, *server_, images_);

  if (options_.analytics) {
    broker_.declare_queue(kAnalyticsQueue, {1000000, seconds(30)});
    broker_.bind(broker::Exchange::LiveData, "live.#", kAnalyticsQueue);
    analytics_consumer_ = broker_.consume(
        kAnalyticsQueue,
        [this](const broker::Delivery& d) {
          on_live(d);
          broker_.ack(d.queue, d.tag);
        },
        100000);
  }
}

Testbed::~Testbed() { stop(); }

void Testbed::stop() {
  if (stopped_) return;
  stopped_ = true;
  if (analytics_consumer_) broker_.cancel(analytics_consumer_);
  analytics_consumer_ = 0;
  control_->stop();
  for (auto& c : collectors_) c->stop();
  for (auto& s : storers_) s->stop();
  supervisor_.stop_all();
  store_.flush();
}

void Testbed::flush() {
  for (auto& s : storers_) s->flush();
  store_.flush();
}

Accounting Testbed::accounting() const {
  Accounting a;
  a.notifications = server_->stats().notifications;
  for (const auto& c : collectors_) {
    a.processed += c->stats().records;
    a.published += c->stats().published;
  }
  a.dead_lettered = dead_.count();
  const auto s = store_.stats();
  a.dedup = s.duplicates;
  a.stored = s.stored;
  return a;
}

std::string Testbed::desk_of(const std::string& device) {
  if (device.starts_with("egg-")) return "desk-" + device.substr(4);
  return {};
}

std::string Testbed::egg_of(const std::string& desk) {
  if (desk.starts_with("desk-")) return "egg-" + desk.substr(5);
  return {};
}

std::uint64_t Testbed::subscribe(ReadingListener l) {
  std::lock_guard lock(mu_);
  listeners_[next_listener_] = std::move(l);
  return next_listener_++;
}

void Testbed::unsubscribe(std::uint64_t id) {
  std::lock_guard lock(mu_);
  listeners_.erase(id);
}

std::vector<analytics::ComfortEvent> Testbed::comfort_events() const {
  std::lock_guard lock(mu_);
  return comfort_events_;
}

std::optional<std::string> Testbed::pseudonym_of(const std::string& endpoint) const {
  return pseudonyms_.lookup(endpoint);
}

std::string Testbed::site_token(const std::string& site) { return pseudonyms_.token("site/" + site); }

void Testbed::on_live(const broker::Delivery& d) {
  datastore::SensorReading r;
  try {
    r = datastore::decode_reading(*d.payload);
  } catch (const datastore::DecodeError&) {
    return;
  }
  std::vector<ReadingListener> listeners;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, l] : listeners_) listeners.push_back(l);
  }
  for (const auto& l : listeners) l(r);

  if (r.object_id == kBeaconObject) {
    presence_.update(r.site + "/band-" + std::to_string(r.instance + 1), r.endpoint, r.value);
    return;
  }
  const std::string desk = desk_of(r.endpoint);
  if (desk.empty() || r.site != site_token(options_.default_site)) return;
  for (auto& ev : comfort_.on_reading(desk, r.object_id, r.value, r.server_time)) {
    if (auto raw = pseudonyms_.raw_of(r.pseudonym)) {
      try {
        server_->execute(*raw, lwm2m::Path(3338, 0, 5850), [](const coap::Outcome&) {});
      } catch (const Error&) {
        ev.buzzer_executed = false;
      }
    }
    notifications_.add(ev);
    nlohmann::json j{{"schema", 1},
                     {"desk", ev.desk},
                     {"variable", analytics::to_string(ev.variable)},
                     {"measured", ev.measured},
                     {"target", ev.target},
                     {"at", format_iso8601(ev.fired_at)},
                     {"buzzer", ev.buzzer_executed}};
    broker_.publish(broker::Exchange::Control, "control.comfort", j.dump());
    std::lock_guard lock(mu_);
    comfort_events_.push_back(ev);
  }
}

analytics::QualityInput Testbed::quality_input(const std::string& site, TimePoint t0, TimePoint t1,
                                               const std::vector<int>& objects) {
  analytics::QualityInput in;
  datastore::QueryArgs q;
  q.site = site_token(site);
  q.t0 = t0;
  q.t1 = t1;
  for (int obj : objects) {
    q.object_id = obj;
    for (const auto& r : store_.query(q)) in[r.endpoint][obj].push_back(r.value);
  }
  return in;
}

}  // namespace makesense::gateway
