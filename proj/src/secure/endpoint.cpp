#include "makesense/secure/endpoint.hpp"

namespace makesense::secure {

namespace {

Bytes wrap(Envelope type, ByteView body) {
  Bytes out;
  out.reserve(body.size() + 1);
  out.push_back(static_cast<std::uint8_t>(type));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

}  // namespace

const char* to_string(SecureClient::Status s) {
  switch (s) {
    case SecureClient::Status::Connected:
      return "Connected";
    case SecureClient::Status::UnknownPskId:
      return "UnknownPskId";
    case SecureClient::Status::AuthFailure:
      return "AuthFailure";
    case SecureClient::Status::Timeout:
      return "HandshakeTimeout";
  }
  return "?";
}

// -- SecureServer --------------------------------------------------------------

SecureServer::SecureServer(net::DatagramTransport& lower, const KeyStore& keys, std::optional<std::uint64_t> seed)
    : lower_(lower), keys_(keys), rng_(seed) {
  lower_.set_receiver([this](const net::Address& from, ByteView data) { receive(from, data); });
}

SecureServer::~SecureServer() { lower_.set_receiver({}); }

void SecureServer::set_receiver(Receiver receiver) {
  std::lock_guard lock(mu_);
  receiver_ = std::move(receiver);
}

void SecureServer::on_session(SessionListener listener) {
  std::lock_guard lock(mu_);
  session_listener_ = std::move(listener);
}

std::size_t SecureServer::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

SecurityStats SecureServer::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void SecureServer::drop_peer(const net::Address& peer) {
  std::lock_guard lock(mu_);
  auto it = by_peer_.find(peer);
  if (it == by_peer_.end()) return;
  sessions_.erase(it->second);
  by_peer_.erase(it);
}

void SecureServer::send(const net::Address& to, ByteView datagram) {
  Bytes wire;
  {
    std::lock_guard lock(mu_);
    auto it = by_peer_.find(to);
    if (it == by_peer_.end()) {
      ++stats_.dropped_no_session;
      return;
    }
    auto& entry = *sessions_.at(it->second);
    wire = wrap(Envelope::Record, entry.session.seal(datagram));
    ++stats_.records_out;
  }
  lower_.send(to, wire);
}

void SecureServer::receive(const net::Address& from, ByteView datagram) {
  if (datagram.empty()) return;
  const auto body = datagram.subspan(1);
  switch (static_cast<Envelope>(datagram[0])) {
    case Envelope::Handshake:
      handle_hello(from, body);
      return;
    case Envelope::Record:
      handle_record(from, body);
      return;
    case Envelope::Alert:
      return;
  }
}

void SecureServer::send_alert(const net::Address& to, AlertCode code) {
  const std::uint8_t body = static_cast<std::uint8_t>(code);
  lower_.send(to, wrap(Envelope::Alert, ByteView(&body, 1)));
}

void SecureServer::handle_hello(const net::Address& from, ByteView body) {
  ClientHello hello;
  try {
    hello = ClientHello::decode(body);
  } catch (const SecurityError&) {
    std::lock_guard lock(mu_);
    ++stats_.auth_failures;
    return;
  }

  Bytes reply;
  SessionListener listener;
  {
    std::lock_guard lock(mu_);
    // A retransmitted hello gets the same answer rather than a second session.
    if (auto it = by_peer_.find(from); it != by_peer_.end()) {
      auto& existing = *sessions_.at(it->second);
      if (existing.client_random == hello.random) {
        reply = existing.server_hello;
      } else {
        sessions_.erase(it->second);
        by_peer_.erase(it);
      }
    }
    if (reply.empty()) {
      Random32 server_random;
      rng_.fill(server_random);
      SessionId id;
      do {
        rng_.fill(id);
      } while (sessions_.contains(id));
      try {
        auto accepted = accept_client_hello(hello, keys_, server_random, id);
        reply = wrap(Envelope::Handshake, accepted.hello.encode());
        auto entry = std::make_shared<Entry>(Entry{std::move(accepted.session), from, hello.random, reply});
        sessions_.emplace(id, std::move(entry));
        by_peer_[from] = id;
        ++stats_.handshakes;
        listener = session_listener_;
      } catch (const UnknownPskId&) {
        ++stats_.unknown_psk;
        send_alert(from, AlertCode::UnknownPskId);
        return;
      } catch (const AuthFailure&) {
        ++stats_.auth_failures;
        send_alert(from, AlertCode::AuthFailure);
        return;
      }
    }
  }
  if (listener) listener(from);
  lower_.send(from, reply);
}

void SecureServer::handle_record(const net::Address& from, ByteView record) {
  Bytes plaintext;
  Receiver receiver;
  {
    std::lock_guard lock(mu_);
    const auto id = SecureSession::peek_session_id(record);
    auto it = id ? sessions_.find(*id) : sessions_.end();
    if (it == sessions_.end()) {
      ++stats_.unknown_session;
      return;
    }
    auto& entry = *it->second;
    try {
      plaintext = entry.session.open(record);
    } catch (const ReplayError&) {
      ++stats_.replays;
      return;
    } catch (const SecurityError&) {
      ++stats_.integrity_failures;
      return;
    }
    ++stats_.records_in;
    if (entry.peer != from) {
      // Authenticated traffic moved to a new source address.
      by_peer_.erase(entry.peer);
      entry.peer = from;
      by_peer_[from] = it->first;
    }
    receiver = receiver_;
  }
  if (receiver) receiver(from, plaintext);
}

// -- SecureClient --------------------------------------------------------------

SecureClient::SecureClient(Scheduler& scheduler, net::DatagramTransport& lower, net::Address server,
                           PskIdentity identity, std::optional<std::uint64_t> seed, HandshakeParams params)
    : scheduler_(scheduler),
      lower_(lower),
      server_(std::move(server)),
      identity_(std::move(identity)),
      rng_(seed),
      params_(params) {
  lower_.set_receiver([this](const net::Address& from, ByteView data) { receive(from, data); });
}

SecureClient::~SecureClient() {
  lower_.set_receiver({});
  scheduler_.cancel(retry_timer_);
}

void SecureClient::set_receiver(Receiver receiver) {
  std::lock_guard lock(mu_);
  receiver_ = std::move(receiver);
}

bool SecureClient::connected() const {
  std::lock_guard lock(mu_);
  return session_.has_value();
}

SecurityStats SecureClient::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void SecureClient::reset() {
  std::lock_guard lock(mu_);
  session_.reset();
  pending_hello_.reset();
  on_connect_ = nullptr;
  scheduler_.cancel(retry_timer_);
}

void SecureClient::connect(ConnectCallback on_done) {
  {
    std::lock_guard lock(mu_);
    session_.reset();
    Random32 random;
    rng_.fill(random);
    pending_hello_ = make_client_hello(random, identity_);
    attempts_left_ = params_.attempts;
    on_connect_ = std::move(on_done);
  }
  send_hello();
}

void SecureClient::send_hello() {
  Bytes wire;
  {
    std::lock_guard lock(mu_);
    if (!pending_hello_) return;
    if (attempts_left_-- <= 0) {
      pending_hello_.reset();
      auto cb = std::move(on_connect_);
      on_connect_ = nullptr;
      if (cb) {
        // Run outside the lock.
        scheduler_.post([cb] { cb(Status::Timeout); });
      }
      return;
    }
    wire = wrap(Envelope::Handshake, pending_hello_->encode());
    retry_timer_ = scheduler_.after(params_.retry_interval, [this] { send_hello(); });
  }
  lower_.send(server_, wire);
}

void SecureClient::finish(Status status) {
  ConnectCallback cb;
  {
    std::lock_guard lock(mu_);
    scheduler_.cancel(retry_timer_);
    pending_hello_.reset();
    cb = std::move(on_connect_);
    on_connect_ = nullptr;
  }
  if (cb) cb(status);
}

void SecureClient::receive(const net::Address& from, ByteView datagram) {
  if (datagram.empty() || from != server_) return;
  const auto body = datagram.subspan(1);
  switch (static_cast<Envelope>(datagram[0])) {
    case Envelope::Handshake: {
      std::optional<Status> status;
      {
        std::lock_guard lock(mu_);
        if (!pending_hello_) return;
        try {
          session_.emplace(finish_handshake(*pending_hello_, identity_, ServerHello::decode(body)));
          ++stats_.handshakes;
          status = Status::Connected;
        } catch (const SecurityError&) {
          ++stats_.auth_failures;
          status = Status::AuthFailure;
        }
      }
      finish(*status);
      return;
    }
    case Envelope::Alert: {
      {
        std::lock_guard lock(mu_);
        if (!pending_hello_) return;
      }
      const bool unknown = !body.empty() && body[0] == static_cast<std::uint8_t>(AlertCode::UnknownPskId);
      finish(unknown ? Status::UnknownPskId : Status::AuthFailure);
      return;
    }
    case Envelope::Record: {
      Bytes plaintext;
      Receiver receiver;
      {
        std::lock_guard lock(mu_);
        if (!session_) {
          ++stats_.unknown_session;
          return;
        }
        try {
          plaintext = session_->open(body);
        } catch (const ReplayError&) {
          ++stats_.replays;
          return;
        } catch (const SecurityError&) {
          ++stats_.integrity_failures;
          return;
        }
        ++stats_.records_in;
        receiver = receiver_;
      }
      if (receiver) receiver(from, plaintext);
      return;
    }
  }
}

void SecureClient::send(const net::Address& to, ByteView datagram) {
  Bytes wire;
  {
    std::lock_guard lock(mu_);
    if (!session_ || to != server_) {
      ++stats_.dropped_no_session;
      return;
    }
    wire = wrap(Envelope::Record, session_->seal(datagram));
    ++stats_.records_out;
  }
  lower_.send(server_, wire);
}

}  // namespace makesense::secure
