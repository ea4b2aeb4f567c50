#pragma once

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "makesense/common/scheduler.hpp"

namespace makesense::collector {

/// Restarts crashed workers after a short delay. A worker that crashes more
/// than `max_restarts` times within `window` is given up on and stays down.
class Supervisor {
 public:
  struct Options {
    Duration restart_delay{500};
    int max_restarts = 10;
    Duration window{60000};
  };
  enum class State { Running, Restarting, GivenUp };
  struct Event {
    std::string worker;
    TimePoint at;
    std::string cause;
    bool gave_up = false;
  };
  struct Health {
    State state = State::Running;
    std::uint64_t restarts = 0;
  };

  Supervisor(Scheduler& scheduler, Options options);
  Supervisor(Scheduler& scheduler) : Supervisor(scheduler, Options{}) {}
  ~Supervisor();

  /// Registers and starts a worker.
  void add(const std::string& name, std::function<void()> start, std::function<void()> kill);
  /// Reports a crash observed from inside the worker (it is already down).
  void crashed(const std::string& name, const std::string& cause);
  /// Kills a worker from outside, as a fault injector would.
  void kill(const std::string& name, const std::string& cause = "killed");
  void stop_all();

  std::map<std::string, Health> health() const;
  std::vector<Event> events() const;
  bool any_given_up() const;

 private:
  struct Worker {
    std::function<void()> start;
    std::function<void()> kill;
    Health health;
    std::deque<TimePoint> recent;
    Scheduler::TimerId timer = 0;
  };

  Scheduler& scheduler_;
  Options options_;
  mutable std::mutex mu_;
  std::map<std::string, Worker> workers_;
  std::vector<Event> events_;
};

const char* to_string(Supervisor::State s);

}  // namespace makesense::collector
