#include "makesense/collector/collector.hpp"

#include <algorithm>

#include "json.hpp"
#include "makesense/datastore/reading.hpp"
#include "makesense/lwm2m/catalog.hpp"
#include "makesense/lwm2m/records.hpp"

namespace makesense::collector {

using lwm2m::Path;
using lwm2m::RegistryEvent;

DeadLetterLog::DeadLetterLog(std::optional<std::filesystem::path> file) {
  if (file) {
    if (file->has_parent_path()) std::filesystem::create_directories(file->parent_path());
    out_.emplace(*file, std::ios::app);
    if (!*out_) throw Error("cannot open dead-letter file " + file->string());
  }
}

void DeadLetterLog::add(const std::string& pseudonym, const std::string& reason, std::string_view payload) {
  std::lock_guard lock(mu_);
  ++count_;
  if (!out_) return;
  nlohmann::json j{{"pseudonym", pseudonym}, {"reason", reason},
                   {"payload", std::string(payload)}};
  *out_ << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  out_->flush();
}

std::uint64_t DeadLetterLog::count() const {
  std::lock_guard lock(mu_);
  return count_;
}

// ---------------------------------------------------------------------------

ControlPlane::ControlPlane(Scheduler& scheduler, broker::Broker& broker, lwm2m::Server& server, Blacklist& blacklist,
                           ControlPlaneOptions options)
    : scheduler_(scheduler),
      broker_(broker),
      server_(server),
      blacklist_(blacklist),
      options_(std::move(options)),
      alive_(std::make_shared<bool>(true)) {
  std::weak_ptr<bool> alive = alive_;
  blacklist_.on_change([this, alive](const Blacklist::Entry& e, bool) {
    if (alive.expired()) return;
    // Edits may arrive from API threads; reconcile on the loop.
    scheduler_.post([this, alive, ep = e.endpoint] {
      if (!alive.expired() && consumer_) reconcile(ep);
    });
  });
}

ControlPlane::~ControlPlane() {
  stop();
  alive_.reset();
}

void ControlPlane::start() {
  if (consumer_) return;
  broker_.declare_queue(options_.queue);
  broker_.bind(broker::Exchange::Control, "control.registered", options_.queue);
  broker_.bind(broker::Exchange::Control, "control.updated", options_.queue);
  broker_.bind(broker::Exchange::Control, "control.deregistered", options_.queue);
  consumer_ = broker_.consume(options_.queue, [this](const broker::Delivery& d) {
    try {
      handle(decode_control_event(*d.payload));
    } catch (const BadEvent&) {
    }
    broker_.ack(d.queue, d.tag);
  });
}

void ControlPlane::stop() {
  if (!consumer_) return;
  broker_.cancel(consumer_);
  consumer_ = 0;
  for (auto id : retries_) scheduler_.cancel(id);
  retries_.clear();
}

Duration ControlPlane::period_for(int object_id) const {
  auto it = options_.object_periods.find(object_id);
  return it == options_.object_periods.end() ? options_.default_period : it->second;
}

void ControlPlane::handle(const ControlEvent& ev) {
  ++stats_.events;
  switch (ev.kind) {
    case RegistryEvent::Kind::Registered: {
      auto reg = server_.registry().find_endpoint(ev.endpoint);
      if (!reg || reg->id != ev.registration_id) return;  // stale
      auto [it, fresh] = handled_.try_emplace(ev.endpoint, ev.registration_id);
      if (!fresh && it->second == ev.registration_id) return;
      it->second = ev.registration_id;
      reconcile(ev.endpoint);
      if (options_.time_sync) sync_time(ev.endpoint, true);
      break;
    }
    case RegistryEvent::Kind::Updated:
      reconcile(ev.endpoint);
      break;
    case RegistryEvent::Kind::Deregistered: {
      auto it = handled_.find(ev.endpoint);
      if (it != handled_.end() && it->second == ev.registration_id) {
        handled_.erase(it);
        last_sync_.erase(ev.endpoint);
      }
      break;
    }
  }
}

std::vector<Path> ControlPlane::desired(const std::string& endpoint) const {
  std::vector<Path> out;
  auto reg = server_.registry().find_endpoint(endpoint);
  if (!reg) return out;
  for (const auto& link : reg->links) {
    const auto* spec = lwm2m::find_object(link.object);
    if (!spec || !spec->sensor || spec->measurement_resource < 0 || !link.instance) continue;
    Path p(link.object, *link.instance, spec->measurement_resource);
    if (blacklist_.blocks(endpoint, p)) continue;
    out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void ControlPlane::reconcile(const std::string& endpoint) {
  const auto want = desired(endpoint);
  for (const auto& p : server_.observations(endpoint)) {
    if (std::binary_search(want.begin(), want.end(), p)) continue;
    try {
      server_.cancel_observation(endpoint, p);
      ++stats_.observations_cancelled;
    } catch (const lwm2m::Lwm2mError&) {
    }
  }
  for (const auto& p : want) start_observation(endpoint, p, 1);
}

void ControlPlane::start_observation(const std::string& endpoint, const Path& path, int attempt) {
  if (server_.observing(endpoint, path)) return;
  std::weak_ptr<bool> alive = alive_;
  try {
    server_.observe(endpoint, path, period_for(path.object), [this, alive, endpoint, path, attempt](const coap::Outcome& o) {
      if (alive.expired()) return;
      if (coap::succeeded(o) && std::get<coap::Message>(o).code == coap::codes::kContent) {
        ++stats_.observations_started;
        return;
      }
      ++stats_.observe_failures;
      if (attempt >= options_.observe_attempts || !consumer_) {
        ++stats_.observe_given_up;
        return;
      }
      auto id = std::make_shared<Scheduler::TimerId>(0);
      *id = scheduler_.after(options_.retry_backoff * attempt, [this, alive, endpoint, path, attempt, id] {
        if (alive.expired()) return;
        retries_.erase(*id);
        auto want = desired(endpoint);
        if (std::binary_search(want.begin(), want.end(), path)) start_observation(endpoint, path, attempt + 1);
      });
      retries_.insert(*id);
    });
  } catch (const lwm2m::Lwm2mError&) {
    // Registration vanished between the event and now.
  }
}

void ControlPlane::sync_time(const std::string& endpoint, bool force) {
  const TimePoint now = scheduler_.now();
  auto it = last_sync_.find(endpoint);
  if (!force && it != last_sync_.end() && now - it->second < options_.resync_min_interval) return;
  last_sync_[endpoint] = now;
  try {
    server_.write(endpoint, Path(lwm2m::kDeviceObject, 0, lwm2m::device::kCurrentTime), format_unix_seconds(now),
                  [](const coap::Outcome&) {});
    ++stats_.time_syncs;
  } catch (const lwm2m::Lwm2mError&) {
  }
}

// ---------------------------------------------------------------------------

CollectorWorker::CollectorWorker(Scheduler& scheduler, broker::Broker& broker, PseudonymTable& pseudonyms,
                                 DeadLetterLog& dead, CollectorWorkerOptions options, DriftHandler on_drift)
    : scheduler_(scheduler),
      broker_(broker),
      pseudonyms_(pseudonyms),
      dead_(dead),
      options_(std::move(options)),
      on_drift_(std::move(on_drift)) {}

CollectorWorker::~CollectorWorker() { kill(); }

void CollectorWorker::start() {
  if (consumer_) return;
  consumer_ = broker_.consume(
      options_.queue,
      [this](const broker::Delivery& d) {
        ++stats_.deliveries;
        process(*d.payload, d.enqueued_at);
        pending_acks_.push_back(d.tag);
        if (!timer_) timer_ = scheduler_.after(options_.ack_interval, [this] {
          timer_ = 0;
          flush_acks();
        });
      },
      options_.prefetch);
}

void CollectorWorker::kill() {
  if (!consumer_) return;
  broker_.cancel(consumer_);
  consumer_ = 0;
  scheduler_.cancel(timer_);
  timer_ = 0;
  pending_acks_.clear();
}

void CollectorWorker::stop() {
  if (!consumer_) return;
  flush_acks();
  kill();
}

void CollectorWorker::flush_acks() {
  for (auto tag : pending_acks_) broker_.ack(options_.queue, tag);
  pending_acks_.clear();
}

std::size_t CollectorWorker::process(std::string_view body, TimePoint received) {
  const RawNotification raw = decode_raw(body);
  const EndpointName name = split_endpoint(raw.endpoint, options_.default_site);
  const std::string pseudonym = pseudonyms_.token(raw.endpoint);

  std::vector<lwm2m::Record> records;
  try {
    records = lwm2m::decode_records(raw.payload);
  } catch (const lwm2m::BadPayload& e) {
    // An unparseable payload counts as one record so processed = published + dead-lettered.
    ++stats_.records;
    ++stats_.dead_lettered;
    dead_.add(pseudonym, std::string("parse: ") + e.what(), raw.payload);
    return 0;
  }
  if (records.empty()) {
    ++stats_.records;
    ++stats_.dead_lettered;
    dead_.add(pseudonym, "empty", raw.payload);
    return 0;
  }

  const std::string site = pseudonyms_.token("site/" + name.site);
  std::size_t published = 0;
  bool drifted = false;
  for (const auto& rec : records) {
    ++stats_.records;
    std::optional<Path> path;
    try {
      path = Path::parse(rec.name);
    } catch (const lwm2m::BadPath&) {
    }
    const double* value = std::get_if<double>(&rec.value);
    if (!path || !path->resource || !value) {
      ++stats_.dead_lettered;
      dead_.add(pseudonym, !path || !path->resource ? "bad path" : "non-numeric", raw.payload);
      continue;
    }
    datastore::SensorReading r;
    r.pseudonym = pseudonym;
    r.site = site;
    r.endpoint = name.device;
    r.object_id = path->object;
    r.instance = *path->instance;
    r.resource = *path->resource;
    r.value = *value;
    if (const auto* spec = lwm2m::find_object(path->object)) r.unit = spec->unit;
    r.server_time = received;
    r.device_time = rec.time.value_or(received);
    if (rec.time && (r.device_time - received > options_.drift_threshold ||
                     received - r.device_time > options_.drift_threshold))
      drifted = true;
    broker_.publish(broker::Exchange::LiveData, "live." + pseudonym + "." + std::to_string(path->object),
                    datastore::encode_reading(r));
    ++stats_.published;
    ++published;
  }
  if (drifted) {
    ++stats_.drift_detected;
    if (on_drift_) on_drift_(raw.endpoint);
  }
  return published;
}

}  // namespace makesense::collector
