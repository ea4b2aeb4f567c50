#include "makesense/collector/supervisor.hpp"

#include "makesense/common/error.hpp"

namespace makesense::collector {

const char* to_string(Supervisor::State s) {
  switch (s) {
    case Supervisor::State::Running: return "running";
    case Supervisor::State::Restarting: return "restarting";
    case Supervisor::State::GivenUp: return "given_up";
  }
  return "?";
}

Supervisor::Supervisor(Scheduler& scheduler, Options options) : scheduler_(scheduler), options_(options) {}

Supervisor::~Supervisor() {
  std::lock_guard lock(mu_);
  for (auto& [name, w] : workers_) scheduler_.cancel(w.timer);
}

void Supervisor::add(const std::string& name, std::function<void()> start, std::function<void()> kill) {
  std::function<void()> starter;
  {
    std::lock_guard lock(mu_);
    if (workers_.contains(name)) throw Error("duplicate worker " + name);
    auto& w = workers_[name];
    w.start = std::move(start);
    w.kill = std::move(kill);
    starter = w.start;
  }
  starter();
}

void Supervisor::crashed(const std::string& name, const std::string& cause) {
  std::lock_guard lock(mu_);
  auto it = workers_.find(name);
  if (it == workers_.end()) return;
  auto& w = it->second;
  if (w.health.state != State::Running) return;
  const TimePoint now = scheduler_.now();
  w.recent.push_back(now);
  while (!w.recent.empty() && now - w.recent.front() > options_.window) w.recent.pop_front();
  if (static_cast<int>(w.recent.size()) > options_.max_restarts) {
    w.health.state = State::GivenUp;
    events_.push_back({name, now, cause, true});
    return;
  }
  w.health.state = State::Restarting;
  events_.push_back({name, now, cause, false});
  w.timer = scheduler_.after(options_.restart_delay, [this, name] {
    std::function<void()> starter;
    {
      std::lock_guard lock(mu_);
      auto it = workers_.find(name);
      if (it == workers_.end() || it->second.health.state != State::Restarting) return;
      it->second.timer = 0;
      it->second.health.state = State::Running;
      ++it->second.health.restarts;
      starter = it->second.start;
    }
    starter();
  });
}

void Supervisor::kill(const std::string& name, const std::string& cause) {
  std::function<void()> killer;
  {
    std::lock_guard lock(mu_);
    auto it = workers_.find(name);
    if (it == workers_.end()) throw Error("unknown worker " + name);
    killer = it->second.kill;
  }
  killer();
  crashed(name, cause);
}

void Supervisor::stop_all() {
  std::vector<std::function<void()>> killers;
  {
    std::lock_guard lock(mu_);
    for (auto& [name, w] : workers_) {
      scheduler_.cancel(w.timer);
      killers.push_back(w.kill);
    }
  }
  for (auto& k : killers) k();
}

std::map<std::string, Supervisor::Health> Supervisor::health() const {
  std::lock_guard lock(mu_);
  std::map<std::string, Health> out;
  for (const auto& [name, w] : workers_) out[name] = w.health;
  return out;
}

std::vector<Supervisor::Event> Supervisor::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

bool Supervisor::any_given_up() const {
  std::lock_guard lock(mu_);
  for (const auto& [name, w] : workers_)
    if (w.health.state == State::GivenUp) return true;
  return false;
}

}  // namespace makesense::collector
