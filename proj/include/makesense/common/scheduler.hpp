#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <future>
#include <mutex>
#include <queue>
#include <thread>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "makesense/common/time.hpp"

namespace makesense {

/// Single-threaded event loop driven either by a virtual clock (time jumps from
/// event to event) or by the wall clock. Events due at the same instant run in
/// the order they were scheduled, which makes virtual runs reproducible.
///
/// `at`, `after`, `cancel` and `post` may be called from any thread. Tasks only
/// ever run on the thread that drives `run_until` / `run`.
class Scheduler {
 public:
  enum class Mode { Virtual, Real };
  using Task = std::function<void()>;
  using TimerId = std::uint64_t;

  explicit Scheduler(Mode mode = Mode::Virtual, TimePoint start = kDefaultEpoch);
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  Mode mode() const { return mode_; }
  TimePoint now() const;

  TimerId at(TimePoint when, Task task);
  TimerId after(Duration delay, Task task) { return at(now() + delay, std::move(task)); }
  void post(Task task) { at(now(), std::move(task)); }
  void cancel(TimerId id);

  /// Runs every event due at or before `end`; on the virtual clock `now()`
  /// equals `end` afterwards. On the real clock this blocks until `end` or stop().
  void run_until(TimePoint end);
  void run_for(Duration d) { run_until(now() + d); }
  /// Real clock only: runs until stop().
  void run();
  void stop();

  std::size_t pending() const;
  std::uint64_t executed() const { return executed_.load(); }

  /// Runs `fn` on the loop thread and waits for the result. Runs inline when
  /// called from the loop thread or while no loop is running.
  template <class F>
  auto call(F&& fn) -> std::invoke_result_t<F> {
    using R = std::invoke_result_t<F>;
    if (!running_.load() || std::this_thread::get_id() == loop_thread_) return fn();
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    auto result = task->get_future();
    post([task] { (*task)(); });
    return result.get();
  }

 private:
  struct Entry {
    TimePoint when;
    std::uint64_t seq;
    bool operator>(const Entry& o) const { return when != o.when ? when > o.when : seq > o.seq; }
  };

  bool pop_due(TimePoint limit, Task& out);

  const Mode mode_;
  mutable std::mutex mu_;
  std::condition_variable wake_;
  TimePoint virtual_now_;
  std::uint64_t next_seq_ = 1;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  std::unordered_map<std::uint64_t, Task> tasks_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stop_requested_{false};
  std::atomic<std::uint64_t> executed_{0};
  std::thread::id loop_thread_;
};

}  // namespace makesense
