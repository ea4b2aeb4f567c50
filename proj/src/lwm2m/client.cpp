#include "makesense/lwm2m/client.hpp"

#include <charconv>

#include "makesense/lwm2m/catalog.hpp"

namespace makesense::lwm2m {

using coap::Message;
namespace codes = coap::codes;

namespace {

Message reply(coap::Code code, std::string payload = {}) {
  Message m;
  m.code = code;
  m.set_payload(payload);
  return m;
}

std::string token_key(const Bytes& token) { return std::string(token.begin(), token.end()); }

}  // namespace

const char* to_string(Client::State s) {
  switch (s) {
    case Client::State::Stopped: return "stopped";
    case Client::State::Registering: return "registering";
    case Client::State::Registered: return "registered";
  }
  return "?";
}

Client::Client(Scheduler& scheduler, net::DatagramTransport& transport, net::Address server, ObjectModel& model,
               ClientOptions options, std::optional<std::uint64_t> seed, coap::TransmissionParams params)
    : scheduler_(scheduler),
      server_(std::move(server)),
      model_(model),
      options_(std::move(options)),
      messenger_(scheduler, transport, seed, params) {
  messenger_.on_request([this](const net::Address& from, const Message& req) { return handle_request(from, req); });
  messenger_.on_reset([this](const net::Address&, const Bytes& token) { cancel_observation(token_key(token)); });
  const Path clock(kDeviceObject, 0, device::kCurrentTime);
  if (model_.has(clock)) {
    model_.set_source(clock, [this](TimePoint t) -> std::optional<Value> { return to_unix_seconds(t); });
    model_.on_write(clock, [this](const Value& v) {
      if (const double* d = std::get_if<double>(&v)) clock_offset_ = from_unix_seconds(*d) - scheduler_.now();
    });
  }
}

Client::~Client() {
  scheduler_.cancel(timer_);
  clear_observations();
  messenger_.abort_all();
}

TimePoint Client::device_now() const { return scheduler_.now() + clock_offset_; }

void Client::set_state(State s) {
  if (state_ == s) return;
  state_ = s;
  if (state_listener_) state_listener_(s);
}

void Client::start() {
  stop();
  boot_ = scheduler_.now();
  set_state(State::Registering);
  send_register();
}

void Client::stop() {
  ++generation_;
  scheduler_.cancel(timer_);
  timer_ = 0;
  clear_observations();
  messenger_.abort_all();
  registration_id_.clear();
  set_state(State::Stopped);
}

void Client::deregister(std::function<void()> done) {
  if (state_ != State::Registered) {
    stop();
    if (done) done();
    return;
  }
  Message m;
  m.type = coap::Type::Con;
  m.code = codes::kDelete;
  m.set_uri_path("/rd/" + registration_id_);
  const auto gen = generation_;
  messenger_.request(server_, std::move(m), [this, gen, done = std::move(done)](const coap::Outcome&) {
    if (gen == generation_) stop();
    if (done) done();
  });
}

void Client::send_register() {
  Message m;
  m.type = coap::Type::Con;
  m.code = codes::kPost;
  m.set_uri_path("/rd");
  m.add_query("ep", options_.endpoint);
  m.add_query("lt", std::to_string(options_.lifetime_s));
  const Path fw(kDeviceObject, 0, device::kFirmwareVersion);
  if (model_.has(fw)) m.add_query("fw", value_to_string(model_.get(fw)));
  std::vector<Path> links;
  for (const auto& p : model_.instances())
    if (p.object != 0) links.push_back(p);
  m.set_payload(format_links(links));
  const auto gen = generation_;
  messenger_.request(server_, std::move(m), [this, gen](const coap::Outcome& o) {
    if (gen != generation_) return;
    if (coap::succeeded(o) && std::get<Message>(o).code == codes::kCreated) {
      registration_id_ = std::get<Message>(o).payload_string();
      set_state(State::Registered);
      schedule_update();
    } else {
      schedule_retry();
    }
  });
}

void Client::send_update() {
  Message m;
  m.type = coap::Type::Con;
  m.code = codes::kPost;
  m.set_uri_path("/rd/" + registration_id_);
  const auto gen = generation_;
  messenger_.request(server_, std::move(m), [this, gen](const coap::Outcome& o) {
    if (gen != generation_) return;
    if (coap::succeeded(o) && std::get<Message>(o).code == codes::kChanged) {
      schedule_update();
      return;
    }
    // Registration lost (expired on the server or unreachable): start over.
    clear_observations();
    registration_id_.clear();
    set_state(State::Registering);
    send_register();
  });
}

void Client::schedule_update() {
  scheduler_.cancel(timer_);
  const Duration interval = options_.update_interval.value_or(Duration(options_.lifetime_s * 1000 / 2));
  const auto gen = generation_;
  timer_ = scheduler_.after(interval, [this, gen] {
    if (gen == generation_) send_update();
  });
}

void Client::schedule_retry() {
  scheduler_.cancel(timer_);
  const auto gen = generation_;
  timer_ = scheduler_.after(options_.retry_interval, [this, gen] {
    if (gen == generation_) send_register();
  });
}

void Client::request(Message msg, Done done) {
  if (msg.type != coap::Type::Non) msg.type = coap::Type::Con;
  messenger_.request(server_, std::move(msg), std::move(done));
}

Message Client::handle_request(const net::Address& from, const Message& req) {
  if (state_ == State::Stopped) return reply(codes::kNotFound);
  try {
    const Path path = Path::parse(req.uri_path());
    if (req.code == codes::kGet) {
      const auto obs = req.observe();
      if (obs && *obs == 0) return start_observation(from, req, path);
      if (obs && *obs == 1) cancel_observation(token_key(req.token));
      Message m = reply(codes::kContent, encode_records(model_.read_records(path, device_now())));
      m.add_uint_option(coap::OptionNumber::ContentFormat, coap::kContentFormatJson);
      return m;
    }
    if (req.code == codes::kPut) {
      model_.write(path, req.payload_string());
      return reply(codes::kChanged);
    }
    if (req.code == codes::kPost) {
      model_.execute(path, req.payload_string());
      return reply(codes::kChanged);
    }
    return reply(codes::kMethodNotAllowed);
  } catch (const PathNotFound& e) {
    return reply(codes::kNotFound, e.what());
  } catch (const NotReadable& e) {
    return reply(codes::kMethodNotAllowed, e.what());
  } catch (const NotWritable& e) {
    return reply(codes::kMethodNotAllowed, e.what());
  } catch (const NotExecutable& e) {
    return reply(codes::kMethodNotAllowed, e.what());
  } catch (const Lwm2mError& e) {
    return reply(codes::kBadRequest, e.what());
  }
}

Message Client::start_observation(const net::Address& from, const Message& req, const Path& path) {
  if (!model_.readable(path)) throw PathNotFound(path.to_string());
  Duration period = options_.default_period;
  if (auto pmax = req.query("pmax")) {
    double s = 0;
    auto [p, ec] = std::from_chars(pmax->data(), pmax->data() + pmax->size(), s);
    if (ec != std::errc() || p != pmax->data() + pmax->size() || s <= 0) throw Lwm2mError("bad pmax");
    period = from_seconds(s);
    if (period <= Duration::zero()) throw Lwm2mError("pmax below clock resolution");
  }
  // One observation per path: a new observe supersedes the previous token.
  for (auto it = observations_.begin(); it != observations_.end(); ++it) {
    if (it->second.path == path) {
      cancel_observation(it->first);
      break;
    }
  }
  const TimePoint now = scheduler_.now();
  const auto k = (now - boot_) / period + 1;
  Observation o{path, period, req.token, from, 0, boot_ + k * period, 0};
  const std::string key = token_key(req.token);
  o.timer = scheduler_.at(o.next, [this, key] { tick(key); });
  observations_[key] = std::move(o);

  Message m = reply(codes::kContent, encode_records(model_.read_records(path, device_now())));
  m.set_observe(0);
  m.add_uint_option(coap::OptionNumber::ContentFormat, coap::kContentFormatJson);
  return m;
}

void Client::tick(const std::string& key) {
  auto it = observations_.find(key);
  if (it == observations_.end()) return;
  auto& o = it->second;
  if (sample_until_ && o.next > *sample_until_) {
    o.timer = 0;
    return;
  }
  auto records = model_.read_records(o.path, device_now());
  if (!records.empty()) {
    Message m;
    m.type = coap::Type::Non;
    m.code = codes::kContent;
    m.token = o.token;
    m.set_observe(++o.sequence & 0xFFFFFF);
    m.add_uint_option(coap::OptionNumber::ContentFormat, coap::kContentFormatJson);
    m.set_payload(encode_records(records));
    messenger_.send(o.peer, std::move(m));
    ++notifications_sent_;
  }
  o.next += o.period;
  o.timer = scheduler_.at(o.next, [this, key] { tick(key); });
}

void Client::cancel_observation(const std::string& key) {
  auto it = observations_.find(key);
  if (it == observations_.end()) return;
  scheduler_.cancel(it->second.timer);
  observations_.erase(it);
}

void Client::clear_observations() {
  for (auto& [key, o] : observations_) scheduler_.cancel(o.timer);
  observations_.clear();
}

}  // namespace makesense::lwm2m
