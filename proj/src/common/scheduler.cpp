#include "makesense/common/scheduler.hpp"

#include "makesense/common/error.hpp"

namespace makesense {

namespace {
TimePoint wall_now() { return std::chrono::floor<Duration>(std::chrono::system_clock::now()); }
}  // namespace

Scheduler::Scheduler(Mode mode, TimePoint start) : mode_(mode), virtual_now_(start) {}

TimePoint Scheduler::now() const {
  if (mode_ == Mode::Real) return wall_now();
  std::lock_guard lock(mu_);
  return virtual_now_;
}

Scheduler::TimerId Scheduler::at(TimePoint when, Task task) {
  TimerId id;
  {
    std::lock_guard lock(mu_);
    if (mode_ == Mode::Virtual && when < virtual_now_) when = virtual_now_;
    id = next_seq_++;
    queue_.push(Entry{when, id});
    tasks_.emplace(id, std::move(task));
  }
  if (mode_ == Mode::Real) wake_.notify_all();
  return id;
}

void Scheduler::cancel(TimerId id) {
  std::lock_guard lock(mu_);
  tasks_.erase(id);
}

std::size_t Scheduler::pending() const {
  std::lock_guard lock(mu_);
  return tasks_.size();
}

bool Scheduler::pop_due(TimePoint limit, Task& out) {
  // Caller holds mu_.
  while (!queue_.empty()) {
    const Entry top = queue_.top();
    auto it = tasks_.find(top.seq);
    if (it == tasks_.end()) {
      queue_.pop();  // cancelled
      continue;
    }
    if (top.when > limit) return false;
    queue_.pop();
    out = std::move(it->second);
    tasks_.erase(it);
    if (mode_ == Mode::Virtual) virtual_now_ = top.when;
    return true;
  }
  return false;
}

void Scheduler::run_until(TimePoint end) {
  running_ = true;
  loop_thread_ = std::this_thread::get_id();
  Task task;
  if (mode_ == Mode::Virtual) {
    while (!stop_requested_) {
      {
        std::lock_guard lock(mu_);
        if (!pop_due(end, task)) {
          if (virtual_now_ < end) virtual_now_ = end;
          break;
        }
      }
      task();
      ++executed_;
    }
  } else {
    while (!stop_requested_) {
      std::unique_lock lock(mu_);
      const TimePoint limit = std::min(wall_now(), end);
      if (pop_due(limit, task)) {
        lock.unlock();
        task();
        ++executed_;
        continue;
      }
      if (wall_now() >= end) break;
      TimePoint next = end;
      while (!queue_.empty() && !tasks_.contains(queue_.top().seq)) queue_.pop();
      if (!queue_.empty()) next = std::min(next, queue_.top().when);
      wake_.wait_until(lock, std::chrono::system_clock::time_point(next) + std::chrono::microseconds(500));
    }
  }
  running_ = false;
  stop_requested_ = false;
  loop_thread_ = {};
}

void Scheduler::run() {
  if (mode_ != Mode::Real) throw Error("Scheduler::run requires the real clock");
  run_until(TimePoint::max() - std::chrono::hours(24 * 365));
}

void Scheduler::stop() {
  stop_requested_ = true;
  wake_.notify_all();
}

}  // namespace makesense
