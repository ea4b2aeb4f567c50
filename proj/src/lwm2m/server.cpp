#include "makesense/lwm2m/server.hpp"

#include <charconv>

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

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string token_key(const Bytes& token) { return std::string(token.begin(), token.end()); }

}  // namespace

Server::Server(Scheduler& scheduler, net::DatagramTransport& transport, Registry& registry,
               std::optional<std::uint64_t> seed, coap::TransmissionParams params)
    : scheduler_(scheduler), registry_(registry), messenger_(scheduler, transport, seed, params) {
  messenger_.on_request([this](const net::Address& from, const Message& req) { return handle_request(from, req); });
  messenger_.on_notification([this](const net::Address& from, const Message& m) { return handle_notification(from, m); });
  registry_.on_event([this](const RegistryEvent& ev) { on_registry_event(ev); });
}

Server::~Server() { messenger_.abort_all(); }

void Server::on_notification(NotificationSink sink) {
  std::lock_guard lock(mu_);
  sink_ = std::move(sink);
}

void Server::serve(const std::string& segment, coap::Messenger::RequestHandler handler) {
  std::lock_guard lock(mu_);
  handlers_[segment] = std::move(handler);
}

Server::Stats Server::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

Message Server::handle_request(const net::Address& from, const Message& req) {
  const std::string path = req.uri_path();
  std::string_view rest = path;
  if (!rest.empty()) rest.remove_prefix(1);
  const auto slash = rest.find('/');
  const std::string first(rest.substr(0, slash));
  if (first == "rd") return handle_rd(from, req, slash == std::string_view::npos ? "" : rest.substr(slash + 1));
  coap::Messenger::RequestHandler handler;
  {
    std::lock_guard lock(mu_);
    if (auto it = handlers_.find(first); it != handlers_.end()) handler = it->second;
  }
  if (handler) return handler(from, req);
  return reply(codes::kNotFound);
}

Message Server::handle_rd(const net::Address& from, const Message& req, std::string_view rest) {
  try {
    if (rest.empty()) {
      if (req.code != codes::kPost) return reply(codes::kMethodNotAllowed);
      const auto ep = req.query("ep");
      if (!ep || ep->empty()) return reply(codes::kBadRequest, "missing ep");
      int lifetime = 86400;
      if (auto lt = req.query("lt")) {
        auto v = parse_int(*lt);
        if (!v || *v <= 0) return reply(codes::kBadRequest, "bad lt");
        lifetime = *v;
      }
      auto links = parse_links(req.payload_string());
      const auto reg = registry_.register_client(*ep, lifetime, std::move(links), from, req.query("fw").value_or(""));
      std::lock_guard lock(mu_);
      ++stats_.registrations;
      return reply(codes::kCreated, reg.id);
    }
    const std::string id(rest);
    if (req.code == codes::kPost) {
      std::optional<int> lifetime;
      if (auto lt = req.query("lt")) {
        lifetime = parse_int(*lt);
        if (!lifetime) return reply(codes::kBadRequest, "bad lt");
      }
      std::optional<std::vector<Path>> links;
      if (!req.payload.empty()) links = parse_links(req.payload_string());
      registry_.update(id, lifetime, std::move(links), from);
      return reply(codes::kChanged);
    }
    if (req.code == codes::kDelete) {
      registry_.deregister(id);
      return reply(codes::kDeleted);
    }
    return reply(codes::kMethodNotAllowed);
  } catch (const UnknownRegistration&) {
    return reply(codes::kNotFound);
  } catch (const Lwm2mError& e) {
    std::lock_guard lock(mu_);
    ++stats_.rejected_registrations;
    return reply(codes::kBadRequest, e.what());
  }
}

bool Server::handle_notification(const net::Address& from, const Message& msg) {
  Notification n;
  NotificationSink sink;
  {
    std::lock_guard lock(mu_);
    auto it = by_token_.find(token_key(msg.token));
    if (it == by_token_.end() || !msg.code.is_success()) {
      ++stats_.rejected_notifications;
      return false;
    }
    n.endpoint = it->second.endpoint;
    n.path = it->second.path;
    ++stats_.notifications;
    sink = sink_;
  }
  const auto reg = registry_.find_endpoint(n.endpoint);
  if (!reg || reg->address != from) {
    std::lock_guard lock(mu_);
    --stats_.notifications;
    ++stats_.rejected_notifications;
    return false;
  }
  n.payload = msg.payload_string();
  n.received = scheduler_.now();
  if (sink) sink(n);
  return true;
}

void Server::on_registry_event(const RegistryEvent& ev) {
  if (ev.kind != RegistryEvent::Kind::Deregistered) return;
  std::lock_guard lock(mu_);
  auto it = by_target_.lower_bound({ev.registration.endpoint, Path()});
  while (it != by_target_.end() && it->first.first == ev.registration.endpoint) {
    by_token_.erase(it->second);
    it = by_target_.erase(it);
  }
}

Registration Server::require(const std::string& endpoint, const Path& path) const {
  auto reg = registry_.find_endpoint(endpoint);
  if (!reg) throw NotRegistered(endpoint);
  for (const auto& link : reg->links)
    if (link.object == path.object && (!path.instance || link.instance == path.instance)) return *reg;
  throw PathNotFound(endpoint + path.to_string());
}

void Server::drop_observation_locked(const std::string& endpoint, const Path& path) {
  auto it = by_target_.find({endpoint, path});
  if (it == by_target_.end()) return;
  by_token_.erase(it->second);
  by_target_.erase(it);
}

void Server::send_request(const std::string& endpoint, const Path& path, coap::Code code, std::string payload,
                          Done done, std::optional<std::uint32_t> observe, std::optional<Duration> period,
                          Bytes token) {
  const auto reg = require(endpoint, path);
  Message m;
  m.type = coap::Type::Con;
  m.code = code;
  m.token = std::move(token);
  m.set_uri_path(path.to_string());
  if (observe) m.set_observe(*observe);
  if (period) m.add_query("pmax", format_number(to_seconds(*period)));
  if (!payload.empty()) m.set_payload(payload);
  messenger_.request(reg.address, std::move(m), [done = std::move(done)](const coap::Outcome& o) {
    if (done) done(o);
  });
}

void Server::observe(const std::string& endpoint, const Path& path, Duration period, Done done) {
  if (period <= Duration::zero()) throw Lwm2mError("notify period must be positive");
  require(endpoint, path);
  Bytes token = messenger_.new_token();
  {
    std::lock_guard lock(mu_);
    drop_observation_locked(endpoint, path);
    by_token_[token_key(token)] = Observation{endpoint, path, period, token};
    by_target_[{endpoint, path}] = token_key(token);
  }
  send_request(
      endpoint, path, codes::kGet, {},
      [this, endpoint, path, token, done = std::move(done)](const coap::Outcome& o) {
        const bool ok = coap::succeeded(o) && std::get<Message>(o).code == codes::kContent &&
                        std::get<Message>(o).observe().has_value();
        if (!ok) {
          std::lock_guard lock(mu_);
          auto it = by_target_.find({endpoint, path});
          if (it != by_target_.end() && it->second == token_key(token)) drop_observation_locked(endpoint, path);
        }
        if (done) done(o);
      },
      0, period, token);
}

void Server::cancel_observation(const std::string& endpoint, const Path& path, Done done) {
  Bytes token;
  {
    std::lock_guard lock(mu_);
    auto it = by_target_.find({endpoint, path});
    if (it == by_target_.end()) throw PathNotFound("no observation on " + endpoint + path.to_string());
    token.assign(it->second.begin(), it->second.end());
    drop_observation_locked(endpoint, path);
  }
  send_request(endpoint, path, codes::kGet, {}, std::move(done), 1, std::nullopt, std::move(token));
}

void Server::read(const std::string& endpoint, const Path& path, Done done) {
  send_request(endpoint, path, codes::kGet, {}, std::move(done));
}

void Server::write(const std::string& endpoint, const Path& path, const std::string& value, Done done) {
  send_request(endpoint, path, codes::kPut, value, std::move(done));
}

void Server::execute(const std::string& endpoint, const Path& path, Done done, const std::string& args) {
  send_request(endpoint, path, codes::kPost, args, std::move(done));
}

bool Server::observing(const std::string& endpoint, const Path& path) const {
  std::lock_guard lock(mu_);
  return by_target_.contains({endpoint, path});
}

std::vector<Path> Server::observations(const std::string& endpoint) const {
  std::lock_guard lock(mu_);
  std::vector<Path> out;
  for (auto it = by_target_.lower_bound({endpoint, Path()}); it != by_target_.end() && it->first.first == endpoint;
       ++it)
    out.push_back(it->first.second);
  return out;
}

}  // namespace makesense::lwm2m
