#include "makesense/fota/service.hpp"

#include <charconv>

#include "makesense/lwm2m/catalog.hpp"
#include "makesense/lwm2m/records.hpp"

namespace makesense::fota {

using lwm2m::Path;

const char* to_string(PushOutcome o) {
  switch (o) {
    case PushOutcome::Pending: return "PENDING";
    case PushOutcome::Success: return "SUCCESS";
    case PushOutcome::IntegrityFailure: return "INTEGRITY_FAILURE";
    case PushOutcome::ConnectionLost: return "CONNECTION_LOST";
    case PushOutcome::Timeout: return "TIMEOUT";
    case PushOutcome::NotRegistered: return "NOT_REGISTERED";
  }
  return "?";
}

struct FotaService::Batch {
  std::size_t remaining = 0;
  std::vector<std::size_t> indices;  // into results_
  Done done;
};

struct FotaService::Session {
  std::string endpoint;
  std::string version;
  std::size_t index = 0;
  std::shared_ptr<Batch> batch;
  bool installing = false;
  bool reading = false;
  TimePoint installed_at;
  TimePoint deadline;
  Scheduler::TimerId timer = 0;
  bool done = false;
};

namespace {

coap::Message reply(coap::Code code, Bytes payload = {}) {
  coap::Message m;
  m.code = code;
  m.payload = std::move(payload);
  return m;
}

std::optional<std::size_t> parse_size(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
  if (ec != std::errc() || p != s->data() + s->size()) return std::nullopt;
  return v;
}

}  // namespace

FotaService::FotaService(Scheduler& scheduler, lwm2m::Server& server, ImageStore& images, Options options)
    : scheduler_(scheduler), server_(server), images_(images), options_(options), alive_(std::make_shared<bool>(true)) {
  server_.serve("fw", [this](const net::Address&, const coap::Message& req) { return serve_chunk(req); });
}

FotaService::~FotaService() {
  alive_.reset();
  std::lock_guard lock(mu_);
  for (auto& s : sessions_) scheduler_.cancel(s->timer);
}

coap::Message FotaService::serve_chunk(const coap::Message& req) {
  if (req.code != coap::codes::kGet) return reply(coap::codes::kMethodNotAllowed);
  const std::string path = req.uri_path();
  const std::string version = path.substr(path.find('/', 1) + 1);
  const auto offset = parse_size(req.query("offset"));
  const auto length = parse_size(req.query("length"));
  if (!offset || !length || *length == 0 || *length > 1024) return reply(coap::codes::kBadRequest);
  std::shared_ptr<const Bytes> image;
  {
    std::lock_guard lock(mu_);
    auto it = served_.find(version);
    if (it != served_.end()) image = it->second;
  }
  if (!image) return reply(coap::codes::kNotFound);
  if (*offset > image->size()) return reply(coap::codes::kBadRequest);
  const std::size_t n = std::min(*length, image->size() - *offset);
  coap::Message m = reply(coap::codes::kContent, Bytes(image->begin() + static_cast<std::ptrdiff_t>(*offset),
                                                      image->begin() + static_cast<std::ptrdiff_t>(*offset + n)));
  return m;
}

void FotaService::push(const std::vector<std::string>& targets, const std::string& version, Done done) {
  auto bytes = images_.get(version);
  if (!bytes) throw FotaError("no image for version " + version);
  auto batch = std::make_shared<Batch>();
  batch->done = std::move(done);
  std::vector<std::shared_ptr<Session>> fresh;
  std::vector<std::pair<std::shared_ptr<Session>, PushOutcome>> immediate;
  {
    std::lock_guard lock(mu_);
    served_[version] = std::make_shared<const Bytes>(std::move(*bytes));
    for (const auto& ep : targets) {
      PushResult r;
      r.endpoint = ep;
      r.version = version;
      r.started = scheduler_.now();
      auto s = std::make_shared<Session>();
      s->endpoint = ep;
      s->version = version;
      s->batch = batch;
      s->index = results_.size();
      s->deadline = scheduler_.now() + options_.timeout;
      auto reg = server_.registry().find_endpoint(ep);
      if (reg) r.previous_version = reg->firmware_version;
      results_.push_back(r);
      batch->indices.push_back(s->index);
      ++batch->remaining;
      sessions_.push_back(s);
      if (!reg)
        immediate.emplace_back(s, PushOutcome::NotRegistered);
      else if (reg->firmware_version == version)
        immediate.emplace_back(s, PushOutcome::Success);
      else
        fresh.push_back(s);
    }
  }
  for (auto& [s, outcome] : immediate) finish(s, outcome);
  std::weak_ptr<bool> alive = alive_;
  for (auto& s : fresh) {
    server_.write(s->endpoint, Path(lwm2m::kFirmwareObject, 0, lwm2m::firmware::kPackageUri), "/fw/" + version,
                  [this, alive, s](const coap::Outcome& o) {
                    if (alive.expired() || s->done) return;
                    if (!coap::succeeded(o) || std::get<coap::Message>(o).code != coap::codes::kChanged) {
                      finish(s, PushOutcome::ConnectionLost);
                      return;
                    }
                    s->timer = scheduler_.after(options_.poll_interval, [this, alive, s] {
                      if (!alive.expired()) poll(s);
                    });
                  });
  }
}

void FotaService::poll(const std::shared_ptr<Session>& s) {
  s->timer = 0;
  if (s->done) return;
  const TimePoint now = scheduler_.now();
  std::weak_ptr<bool> alive = alive_;
  auto again = [this, alive, s] {
    if (s->done) return;
    s->timer = scheduler_.after(options_.poll_interval, [this, alive, s] {
      if (!alive.expired()) poll(s);
    });
  };
  if (now >= s->deadline) {
    finish(s, PushOutcome::Timeout);
    return;
  }
  const auto reg = server_.registry().find_endpoint(s->endpoint);
  if (s->installing && reg && reg->registered_at >= s->installed_at) {
    finish(s, reg->firmware_version == s->version ? PushOutcome::Success : PushOutcome::IntegrityFailure);
    return;
  }
  if (!reg || s->reading) {
    again();
    return;
  }
  s->reading = true;
  server_.read(s->endpoint, Path(lwm2m::kFirmwareObject, 0), [this, alive, s, again](const coap::Outcome& o) {
    if (alive.expired()) return;
    s->reading = false;
    if (s->done) return;
    std::optional<int> state, result;
    if (coap::succeeded(o) && std::get<coap::Message>(o).code == coap::codes::kContent) {
      try {
        for (const auto& r : lwm2m::decode_records(std::get<coap::Message>(o).payload_string())) {
          const double* v = std::get_if<double>(&r.value);
          if (!v) continue;
          if (r.name == "/5/0/3") state = static_cast<int>(*v);
          if (r.name == "/5/0/5") result = static_cast<int>(*v);
        }
      } catch (const lwm2m::BadPayload&) {
      }
    }
    if (state == static_cast<int>(UpdateState::Downloaded) && !s->installing) {
      s->installing = true;
      s->installed_at = scheduler_.now();
      server_.execute(s->endpoint, Path(lwm2m::kFirmwareObject, 0, lwm2m::firmware::kUpdate),
                      [](const coap::Outcome&) {});
    } else if (state == static_cast<int>(UpdateState::Idle) && !s->installing) {
      if (result == static_cast<int>(UpdateResult::IntegrityFailure)) {
        finish(s, PushOutcome::IntegrityFailure);
        return;
      }
      if (result == static_cast<int>(UpdateResult::ConnectionLost)) {
        finish(s, PushOutcome::ConnectionLost);
        return;
      }
    }
    again();
  });
}

void FotaService::finish(const std::shared_ptr<Session>& s, PushOutcome outcome) {
  if (s->done) return;
  s->done = true;
  scheduler_.cancel(s->timer);
  std::vector<PushResult> batch_results;
  Done done;
  {
    std::lock_guard lock(mu_);
    results_[s->index].outcome = outcome;
    results_[s->index].finished = scheduler_.now();
    std::erase(sessions_, s);
    if (--s->batch->remaining == 0) {
      for (auto i : s->batch->indices) batch_results.push_back(results_[i]);
      done = std::move(s->batch->done);
    }
  }
  if (done) done(batch_results);
}

std::vector<PushResult> FotaService::results() const {
  std::lock_guard lock(mu_);
  return results_;
}

std::size_t FotaService::active() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

}  // namespace makesense::fota
