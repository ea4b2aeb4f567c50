#include "makesense/coap/messenger.hpp"

#include <cmath>

namespace makesense::coap {

const char* to_string(Failure f) {
  switch (f) {
    case Failure::Timeout:
      return "Timeout";
    case Failure::Reset:
      return "Reset";
    case Failure::TransportError:
      return "TransportError";
  }
  return "?";
}

Messenger::Messenger(Scheduler& scheduler, net::DatagramTransport& transport, std::optional<std::uint64_t> seed,
                     TransmissionParams params)
    : scheduler_(scheduler), transport_(transport), params_(params), rng_(seed) {
  next_mid_ = static_cast<std::uint16_t>(rng_.next_u64());
  token_salt_ = rng_.next_u64();
  transport_.set_receiver([this](const net::Address& from, ByteView data) { receive(from, data); });
}

Messenger::~Messenger() {
  transport_.set_receiver({});
  std::lock_guard lock(mu_);
  for (auto& [k, p] : pending_) scheduler_.cancel(p.timer);
}

std::string Messenger::mid_key(const net::Address& peer, std::uint16_t mid) {
  std::string k = peer.to_string();
  k.push_back('#');
  k.append(std::to_string(mid));
  return k;
}

std::string Messenger::key(const net::Address& peer, ByteView token) {
  std::string k = peer.to_string();
  k.push_back('|');
  k.append(token.begin(), token.end());
  return k;
}

Bytes Messenger::new_token() {
  std::lock_guard lock(mu_);
  const std::uint64_t v = mix64(token_salt_ + token_counter_++);
  return Bytes{static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
               static_cast<std::uint8_t>(v)};
}

std::uint16_t Messenger::next_message_id() {
  std::lock_guard lock(mu_);
  return next_mid_++;
}

void Messenger::on_request(RequestHandler handler) {
  std::lock_guard lock(mu_);
  request_handler_ = std::move(handler);
}

void Messenger::on_notification(NotificationHandler handler) {
  std::lock_guard lock(mu_);
  notification_handler_ = std::move(handler);
}

void Messenger::on_reset(ResetHandler handler) {
  std::lock_guard lock(mu_);
  reset_handler_ = std::move(handler);
}

Messenger::Stats Messenger::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Messenger::transmit(const net::Address& to, const Bytes& wire) {
  ++stats_.sent;
  transport_.send(to, wire);
}

void Messenger::send_empty(const net::Address& to, Type type, std::uint16_t mid) {
  Message m;
  m.type = type;
  m.message_id = mid;
  transmit(to, encode(m));
}

void Messenger::request(const net::Address& to, Message msg, ResponseCallback on_done) {
  if (msg.type != Type::Con && msg.type != Type::Non) throw InvalidMessage("requests must be CON or NON");
  std::lock_guard lock(mu_);
  msg.message_id = next_mid_++;
  if (msg.token.empty()) {
    const std::uint64_t v = mix64(token_salt_ + token_counter_++);
    msg.token = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
                 static_cast<std::uint8_t>(v)};
  }
  Pending p;
  p.peer = to;
  p.token = msg.token;
  p.message_id = msg.message_id;
  p.wire = encode(msg);
  p.confirmable = msg.type == Type::Con;
  p.timeout = p.confirmable ? params_.ack_timeout : params_.non_response_wait;
  p.on_done = std::move(on_done);
  const std::string k = key(to, msg.token);
  if (auto old = pending_.find(k); old != pending_.end()) {
    scheduler_.cancel(old->second.timer);
    pending_.erase(old);
  }
  p.timer = scheduler_.after(p.timeout, [this, k] { on_timer(k); });
  by_mid_[mid_key(to, p.message_id)] = k;
  const Bytes wire = p.wire;
  pending_.emplace(k, std::move(p));
  transmit(to, wire);
}

void Messenger::send(const net::Address& to, Message msg) {
  std::lock_guard lock(mu_);
  if (msg.message_id == 0 || msg.type == Type::Non || msg.type == Type::Con) msg.message_id = next_mid_++;
  if (msg.type == Type::Non && !msg.token.empty()) {
    auto& slot = sent_non_[msg.message_id % sent_non_.size()];
    slot = SentNon{true, msg.message_id, to, msg.token};
  }
  transmit(to, encode(msg));
}

void Messenger::on_timer(const std::string& pending_key) {
  std::unique_lock lock(mu_);
  auto it = pending_.find(pending_key);
  if (it == pending_.end()) return;
  Pending& p = it->second;
  if (p.confirmable && !p.acknowledged && p.retransmits < params_.max_retransmit) {
    ++p.retransmits;
    ++stats_.retransmissions;
    p.timeout = Duration{std::llround(static_cast<double>(p.timeout.count()) * params_.backoff_factor)};
    p.timer = scheduler_.after(p.timeout, [this, pending_key] { on_timer(pending_key); });
    transmit(p.peer, p.wire);
    return;
  }
  ++stats_.timeouts;
  complete(pending_key, Failure::Timeout);
}

void Messenger::complete(const std::string& pending_key, const Outcome& outcome) {
  std::unique_lock lock(mu_);
  auto it = pending_.find(pending_key);
  if (it == pending_.end()) return;
  scheduler_.cancel(it->second.timer);
  by_mid_.erase(mid_key(it->second.peer, it->second.message_id));
  ResponseCallback cb = std::move(it->second.on_done);
  pending_.erase(it);
  if (cb) cb(outcome);
}

void Messenger::abort_all() {
  std::unique_lock lock(mu_);
  std::vector<std::string> keys;
  for (const auto& [k, p] : pending_) keys.push_back(k);
  for (const auto& k : keys) complete(k, Failure::TransportError);
}

void Messenger::forget_peer(const net::Address& peer) {
  std::lock_guard lock(mu_);
  dedup_.erase(peer);
}

bool Messenger::is_duplicate(const net::Address& from, const Message& msg) {
  const TimePoint now = scheduler_.now();
  auto& peer = dedup_[from];
  while (!peer.order.empty() && peer.order.front().first <= now) {
    auto e = peer.entries.find(peer.order.front().second);
    if (e != peer.entries.end() && e->second.expires <= now) peer.entries.erase(e);
    peer.order.pop_front();
  }
  auto it = peer.entries.find(msg.message_id);
  if (it != peer.entries.end()) {
    ++stats_.duplicates;
    if (!it->second.response.empty()) transmit(from, it->second.response);
    return true;
  }
  const TimePoint expires = now + params_.exchange_lifetime;
  peer.entries.emplace(msg.message_id, DedupEntry{expires, {}});
  peer.order.emplace_back(expires, msg.message_id);
  return false;
}

void Messenger::cache_reply(const net::Address& from, std::uint16_t mid, const Bytes& wire) {
  auto peer = dedup_.find(from);
  if (peer == dedup_.end()) return;
  auto it = peer->second.entries.find(mid);
  if (it != peer->second.entries.end()) it->second.response = wire;
}

void Messenger::receive(const net::Address& from, ByteView datagram) {
  std::unique_lock lock(mu_);
  ++stats_.received;
  Message msg;
  try {
    msg = decode(datagram);
  } catch (const MalformedPdu&) {
    ++stats_.malformed;
    return;
  }
  switch (msg.type) {
    case Type::Ack:
    case Type::Rst:
      handle_ack(from, msg);
      return;
    case Type::Con:
    case Type::Non:
      if (msg.code.empty()) {
        if (msg.type == Type::Con) send_empty(from, Type::Rst, msg.message_id);  // ping
        return;
      }
      if (is_duplicate(from, msg)) return;
      if (msg.code.is_request()) {
        handle_request(from, msg);
      } else {
        handle_response(from, msg);
      }
      return;
  }
}

void Messenger::handle_ack(const net::Address& from, const Message& msg) {
  auto idx = by_mid_.find(mid_key(from, msg.message_id));
  if (idx == by_mid_.end()) {
    if (msg.type == Type::Rst) {
      const auto& slot = sent_non_[msg.message_id % sent_non_.size()];
      if (slot.valid && slot.message_id == msg.message_id && slot.peer == from && reset_handler_) {
        auto handler = reset_handler_;
        const Bytes token = slot.token;
        handler(from, token);
      }
    }
    return;
  }
  const std::string pending_key = idx->second;
  auto it = pending_.find(pending_key);
  if (it == pending_.end()) return;
  if (msg.type == Type::Rst) {
    complete(pending_key, Failure::Reset);
    return;
  }
  if (msg.code.empty()) {
    // Empty ACK: a separate response follows; stop retransmitting.
    it->second.acknowledged = true;
    scheduler_.cancel(it->second.timer);
    it->second.timer = scheduler_.after(params_.exchange_lifetime, [this, pending_key] { on_timer(pending_key); });
    return;
  }
  if (msg.token != it->second.token) return;
  complete(pending_key, msg);
}

void Messenger::handle_request(const net::Address& from, const Message& msg) {
  Message reply;
  if (request_handler_) {
    auto handler = request_handler_;
    reply = handler(from, msg);
  } else {
    reply.code = codes::kNotFound;
  }
  if (msg.type == Type::Con) {
    reply.type = Type::Ack;
    reply.message_id = msg.message_id;
  } else {
    reply.type = Type::Non;
    reply.message_id = next_mid_++;
  }
  reply.token = msg.token;
  Bytes wire;
  try {
    wire = encode(reply);
  } catch (const InvalidMessage&) {
    Message err;
    err.type = reply.type;
    err.message_id = reply.message_id;
    err.token = reply.token;
    err.code = codes::kInternalError;
    wire = encode(err);
  }
  cache_reply(from, msg.message_id, wire);
  transmit(from, wire);
}

void Messenger::handle_response(const net::Address& from, const Message& msg) {
  const std::string pending_key = key(from, msg.token);
  if (pending_.contains(pending_key)) {
    if (msg.type == Type::Con) {
      Message ack;
      ack.type = Type::Ack;
      ack.message_id = msg.message_id;
      const Bytes wire = encode(ack);
      cache_reply(from, msg.message_id, wire);
      transmit(from, wire);
    }
    complete(pending_key, msg);
    return;
  }
  bool accepted = false;
  if (notification_handler_) {
    auto handler = notification_handler_;
    accepted = handler(from, msg);
  }
  if (msg.type == Type::Con || !accepted) {
    Message reply;
    reply.type = accepted ? Type::Ack : Type::Rst;
    reply.message_id = msg.message_id;
    const Bytes wire = encode(reply);
    cache_reply(from, msg.message_id, wire);
    transmit(from, wire);
  }
}

}  // namespace makesense::coap
