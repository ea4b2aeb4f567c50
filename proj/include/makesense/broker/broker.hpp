#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "makesense/common/error.hpp"
#include "makesense/common/scheduler.hpp"

namespace makesense::broker {

MAKESENSE_DEFINE_ERROR(UnknownQueue, Error);

enum class Exchange { Control, LiveData };

const char* to_string(Exchange e);

/// AMQP topic matching: words separated by '.', '*' matches exactly one word,
/// '#' matches zero or more words.
bool topic_matches(std::string_view pattern, std::string_view routing_key);

using Payload = std::shared_ptr<const std::string>;

struct Delivery {
  std::string queue;
  std::uint64_t tag = 0;
  std::string routing_key;
  Payload payload;
  TimePoint enqueued_at;
  bool redelivered = false;
};

struct QueueOptions {
  std::size_t capacity = 100000;
  Duration visibility_timeout{30000};
};

struct QueueStats {
  std::uint64_t enqueued = 0;
  std::uint64_t delivered = 0;  // first deliveries
  std::uint64_t redelivered = 0;
  std::uint64_t acked = 0;
  std::uint64_t dropped_overflow = 0;
  std::size_t ready = 0;
  std::size_t in_flight = 0;
  std::size_t consumers = 0;
};

struct ExchangeStats {
  std::uint64_t published = 0;
  std::uint64_t unroutable = 0;
};

/// In-process topic-exchange broker with two exchanges (control and live data),
/// named bounded queues and at-least-once delivery: a delivered message stays
/// in flight until acked and is requeued once its visibility timeout passes.
///
/// Thread-safe. Push consumers are invoked on the scheduler's loop thread.
class Broker {
 public:
  using Handler = std::function<void(const Delivery&)>;
  using ConsumerId = std::uint64_t;

  explicit Broker(Scheduler& scheduler);
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Idempotent; an existing queue keeps its contents.
  void declare_queue(const std::string& name, QueueOptions options = {});
  void delete_queue(const std::string& name);
  bool has_queue(const std::string& name) const;
  void bind(Exchange exchange, const std::string& pattern, const std::string& queue);

  /// Copies the payload into every queue with a matching binding; returns the copy count.
  std::size_t publish(Exchange exchange, const std::string& routing_key, std::string payload);

  /// Competing consumers share a queue round-robin, each with at most `prefetch` unacked messages.
  ConsumerId consume(const std::string& queue, Handler handler, std::size_t prefetch = 1000);
  /// Detaches a consumer; its unacked messages are redelivered after the visibility timeout.
  void cancel(ConsumerId consumer);
  void ack(const std::string& queue, std::uint64_t tag);

  /// Pull interface with implicit ack. Waits up to `wait` of real time when the queue is empty.
  std::vector<Delivery> fetch(const std::string& queue, std::size_t max, std::chrono::milliseconds wait = {});

  QueueStats queue_stats(const std::string& queue) const;
  ExchangeStats exchange_stats(Exchange exchange) const;
  std::vector<std::string> queue_names() const;

 private:
  struct Message {
    std::string routing_key;
    Payload payload;
    TimePoint enqueued_at;
    bool redelivered = false;
  };
  struct InFlight {
    Message message;
    TimePoint deadline;
    ConsumerId consumer = 0;
  };
  struct Consumer {
    ConsumerId id;
    Handler handler;
    std::size_t prefetch;
    std::size_t unacked = 0;
  };
  struct Queue {
    std::string name;
    QueueOptions options;
    std::deque<Message> ready;
    std::unordered_map<std::uint64_t, InFlight> in_flight;
    std::deque<std::pair<TimePoint, std::uint64_t>> deadlines;
    std::vector<Consumer> consumers;
    std::size_t next_consumer = 0;
    std::uint64_t next_tag = 1;
    bool dispatch_scheduled = false;
    Scheduler::TimerId sweep_timer = 0;
    QueueStats stats;
  };
  struct Binding {
    std::string pattern;
    std::string queue;
  };

  Queue& queue_locked(const std::string& name);
  const Queue& queue_locked(const std::string& name) const;
  void enqueue_locked(Queue& q, Message m);
  void schedule_dispatch_locked(Queue& q);
  void dispatch(const std::string& queue);
  void arm_sweep_locked(Queue& q);
  void sweep(const std::string& queue);

  Scheduler& scheduler_;
  mutable std::mutex mu_;
  std::condition_variable arrived_;
  std::map<std::string, std::unique_ptr<Queue>> queues_;
  std::map<Exchange, std::vector<Binding>> bindings_;
  std::map<Exchange, ExchangeStats> exchange_stats_;
  std::unordered_map<ConsumerId, std::string> consumer_queue_;
  ConsumerId next_consumer_ = 1;
};

}  // namespace makesense::broker
