#include "makesense/datastore/live_window.hpp"

namespace makesense::datastore {

LiveWindow::LiveWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error("live window capacity must be positive");
}

void LiveWindow::push(const SensorReading& r) {
  std::lock_guard lock(mu_);
  auto& ring = rings_[{r.pseudonym, r.object_id, r.instance, r.resource}];
  if (ring.size() == capacity_) ring.pop_front();
  ring.push_back(r);
}

std::vector<SensorReading> LiveWindow::series(const std::string& pseudonym, int object_id, int instance,
                                              int resource) const {
  std::lock_guard lock(mu_);
  auto it = rings_.find({pseudonym, object_id, instance, resource});
  if (it == rings_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::vector<SensorReading> LiveWindow::latest(const std::optional<std::string>& site,
                                              const std::optional<std::string>& endpoint) const {
  std::lock_guard lock(mu_);
  std::vector<SensorReading> out;
  for (const auto& [key, ring] : rings_) {
    const auto& r = ring.back();
    if ((site && r.site != *site) || (endpoint && r.endpoint != *endpoint)) continue;
    out.push_back(r);
  }
  return out;
}

std::size_t LiveWindow::series_count() const {
  std::lock_guard lock(mu_);
  return rings_.size();
}

}  // namespace makesense::datastore
