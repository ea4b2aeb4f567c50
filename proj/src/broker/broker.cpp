#include "makesense/broker/broker.hpp"

#include <algorithm>

namespace makesense::broker {

const char* to_string(Exchange e) { return e == Exchange::Control ? "control" : "live_data"; }

namespace {

bool match_words(std::string_view pattern, std::string_view key) {
  // Both sides are consumed one dot-separated word at a time.
  if (pattern.empty()) return key.empty();
  const auto pdot = pattern.find('.');
  const std::string_view pword = pattern.substr(0, pdot);
  const std::string_view prest = pdot == std::string_view::npos ? std::string_view() : pattern.substr(pdot + 1);
  const bool plast = pdot == std::string_view::npos;
  if (pword == "#") {
    if (plast) return true;
    // '#' absorbs zero words, or one word and retries.
    if (match_words(prest, key)) return true;
    if (key.empty()) return false;
    const auto kdot = key.find('.');
    if (kdot == std::string_view::npos) return match_words(prest, {});
    return match_words(pattern, key.substr(kdot + 1));
  }
  if (key.empty()) return false;
  const auto kdot = key.find('.');
  const std::string_view kword = key.substr(0, kdot);
  const std::string_view krest = kdot == std::string_view::npos ? std::string_view() : key.substr(kdot + 1);
  const bool klast = kdot == std::string_view::npos;
  if (pword != "*" && pword != kword) return false;
  if (plast) return klast;
  if (klast) return match_words(prest, {});
  return match_words(prest, krest);
}

}  // namespace

bool topic_matches(std::string_view pattern, std::string_view routing_key) {
  return match_words(pattern, routing_key);
}

Broker::Broker(Scheduler& scheduler) : scheduler_(scheduler) {}

Broker::~Broker() {
  std::lock_guard lock(mu_);
  for (auto& [name, q] : queues_) scheduler_.cancel(q->sweep_timer);
}

Broker::Queue& Broker::queue_locked(const std::string& name) {
  auto it = queues_.find(name);
  if (it == queues_.end()) throw UnknownQueue(name);
  return *it->second;
}

const Broker::Queue& Broker::queue_locked(const std::string& name) const {
  auto it = queues_.find(name);
  if (it == queues_.end()) throw UnknownQueue(name);
  return *it->second;
}

void Broker::declare_queue(const std::string& name, QueueOptions options) {
  if (options.capacity == 0) throw Error("queue capacity must be positive");
  std::lock_guard lock(mu_);
  if (queues_.contains(name)) return;
  auto q = std::make_unique<Queue>();
  q->name = name;
  q->options = options;
  queues_.emplace(name, std::move(q));
}

void Broker::delete_queue(const std::string& name) {
  std::lock_guard lock(mu_);
  auto it = queues_.find(name);
  if (it == queues_.end()) return;
  scheduler_.cancel(it->second->sweep_timer);
  for (const auto& c : it->second->consumers) consumer_queue_.erase(c.id);
  queues_.erase(it);
  for (auto& [ex, list] : bindings_)
    std::erase_if(list, [&](const Binding& b) { return b.queue == name; });
}

bool Broker::has_queue(const std::string& name) const {
  std::lock_guard lock(mu_);
  return queues_.contains(name);
}

void Broker::bind(Exchange exchange, const std::string& pattern, const std::string& queue) {
  std::lock_guard lock(mu_);
  queue_locked(queue);
  auto& list = bindings_[exchange];
  for (const auto& b : list)
    if (b.pattern == pattern && b.queue == queue) return;
  list.push_back({pattern, queue});
}

void Broker::enqueue_locked(Queue& q, Message m) {
  if (q.ready.size() >= q.options.capacity) {
    q.ready.pop_front();
    ++q.stats.dropped_overflow;
  }
  q.ready.push_back(std::move(m));
  ++q.stats.enqueued;
  schedule_dispatch_locked(q);
}

std::size_t Broker::publish(Exchange exchange, const std::string& routing_key, std::string payload) {
  auto shared = std::make_shared<const std::string>(std::move(payload));
  const TimePoint now = scheduler_.now();
  std::size_t copies = 0;
  {
    std::lock_guard lock(mu_);
    auto& stats = exchange_stats_[exchange];
    ++stats.published;
    auto it = bindings_.find(exchange);
    if (it != bindings_.end()) {
      // A queue bound by several matching patterns still gets one copy.
      std::vector<const std::string*> targets;
      for (const auto& b : it->second) {
        if (!topic_matches(b.pattern, routing_key)) continue;
        if (std::find_if(targets.begin(), targets.end(), [&](const std::string* q) { return *q == b.queue; }) !=
            targets.end())
          continue;
        targets.push_back(&b.queue);
      }
      for (const std::string* name : targets) enqueue_locked(*queues_.at(*name), Message{routing_key, shared, now, false});
      copies = targets.size();
    }
    if (copies == 0) ++stats.unroutable;
  }
  if (copies) arrived_.notify_all();
  return copies;
}

Broker::ConsumerId Broker::consume(const std::string& queue, Handler handler, std::size_t prefetch) {
  std::lock_guard lock(mu_);
  auto& q = queue_locked(queue);
  const ConsumerId id = next_consumer_++;
  q.consumers.push_back(Consumer{id, std::move(handler), std::max<std::size_t>(prefetch, 1), 0});
  consumer_queue_[id] = queue;
  schedule_dispatch_locked(q);
  return id;
}

void Broker::cancel(ConsumerId consumer) {
  std::lock_guard lock(mu_);
  auto it = consumer_queue_.find(consumer);
  if (it == consumer_queue_.end()) return;
  auto qit = queues_.find(it->second);
  consumer_queue_.erase(it);
  if (qit == queues_.end()) return;
  std::erase_if(qit->second->consumers, [&](const Consumer& c) { return c.id == consumer; });
}

void Broker::ack(const std::string& queue, std::uint64_t tag) {
  std::lock_guard lock(mu_);
  auto qit = queues_.find(queue);
  if (qit == queues_.end()) return;
  auto& q = *qit->second;
  auto it = q.in_flight.find(tag);
  if (it == q.in_flight.end()) return;  // already requeued or acked
  for (auto& c : q.consumers) {
    if (c.id == it->second.consumer && c.unacked > 0) {
      --c.unacked;
      break;
    }
  }
  q.in_flight.erase(it);
  ++q.stats.acked;
  if (!q.ready.empty()) schedule_dispatch_locked(q);
}

void Broker::schedule_dispatch_locked(Queue& q) {
  if (q.dispatch_scheduled || q.consumers.empty()) return;
  q.dispatch_scheduled = true;
  scheduler_.post([this, name = q.name] { dispatch(name); });
}

void Broker::dispatch(const std::string& name) {
  while (true) {
    Handler handler;
    Delivery d;
    {
      std::lock_guard lock(mu_);
      auto qit = queues_.find(name);
      if (qit == queues_.end()) return;
      auto& q = *qit->second;
      if (q.ready.empty() || q.consumers.empty()) {
        q.dispatch_scheduled = false;
        return;
      }
      Consumer* target = nullptr;
      for (std::size_t i = 0; i < q.consumers.size(); ++i) {
        auto& c = q.consumers[(q.next_consumer + i) % q.consumers.size()];
        if (c.unacked < c.prefetch) {
          target = &c;
          q.next_consumer = (q.next_consumer + i + 1) % q.consumers.size();
          break;
        }
      }
      if (!target) {
        q.dispatch_scheduled = false;  // re-armed by the next ack
        return;
      }
      Message m = std::move(q.ready.front());
      q.ready.pop_front();
      const std::uint64_t tag = q.next_tag++;
      const TimePoint deadline = scheduler_.now() + q.options.visibility_timeout;
      ++target->unacked;
      if (m.redelivered)
        ++q.stats.redelivered;
      else
        ++q.stats.delivered;
      d = Delivery{name, tag, m.routing_key, m.payload, m.enqueued_at, m.redelivered};
      q.in_flight.emplace(tag, InFlight{std::move(m), deadline, target->id});
      q.deadlines.emplace_back(deadline, tag);
      arm_sweep_locked(q);
      handler = target->handler;
    }
    handler(d);
  }
}

void Broker::arm_sweep_locked(Queue& q) {
  if (q.sweep_timer || q.deadlines.empty()) return;
  q.sweep_timer = scheduler_.at(q.deadlines.front().first, [this, name = q.name] { sweep(name); });
}

void Broker::sweep(const std::string& name) {
  std::lock_guard lock(mu_);
  auto qit = queues_.find(name);
  if (qit == queues_.end()) return;
  auto& q = *qit->second;
  q.sweep_timer = 0;
  const TimePoint now = scheduler_.now();
  std::vector<Message> expired;
  while (!q.deadlines.empty() && q.deadlines.front().first <= now) {
    const auto tag = q.deadlines.front().second;
    q.deadlines.pop_front();
    auto it = q.in_flight.find(tag);
    if (it == q.in_flight.end()) continue;
    for (auto& c : q.consumers) {
      if (c.id == it->second.consumer && c.unacked > 0) {
        --c.unacked;
        break;
      }
    }
    it->second.message.redelivered = true;
    expired.push_back(std::move(it->second.message));
    q.in_flight.erase(it);
  }
  // Requeued messages go back to the head, oldest first.
  for (auto it = expired.rbegin(); it != expired.rend(); ++it) q.ready.push_front(std::move(*it));
  if (!expired.empty()) schedule_dispatch_locked(q);
  arm_sweep_locked(q);
}

std::vector<Delivery> Broker::fetch(const std::string& name, std::size_t max, std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  auto ready = [&] {
    auto it = queues_.find(name);
    return it == queues_.end() || !it->second->ready.empty();
  };
  if (wait.count() > 0) arrived_.wait_for(lock, wait, ready);
  auto& q = queue_locked(name);
  std::vector<Delivery> out;
  while (!q.ready.empty() && out.size() < max) {
    Message m = std::move(q.ready.front());
    q.ready.pop_front();
    out.push_back(Delivery{name, q.next_tag++, std::move(m.routing_key), std::move(m.payload), m.enqueued_at,
                           m.redelivered});
    ++q.stats.delivered;
    ++q.stats.acked;
  }
  return out;
}

QueueStats Broker::queue_stats(const std::string& name) const {
  std::lock_guard lock(mu_);
  const auto& q = queue_locked(name);
  QueueStats s = q.stats;
  s.ready = q.ready.size();
  s.in_flight = q.in_flight.size();
  s.consumers = q.consumers.size();
  return s;
}

ExchangeStats Broker::exchange_stats(Exchange exchange) const {
  std::lock_guard lock(mu_);
  auto it = exchange_stats_.find(exchange);
  return it == exchange_stats_.end() ? ExchangeStats{} : it->second;
}

std::vector<std::string> Broker::queue_names() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, q] : queues_) out.push_back(name);
  return out;
}

}  // namespace makesense::broker
