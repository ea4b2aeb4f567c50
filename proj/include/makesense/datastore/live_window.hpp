#pragma once

#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <tuple>
#include <vector>

#include "makesense/datastore/reading.hpp"

namespace makesense::datastore {

/// Most recent readings per series, for the dashboard's initial chart fill.
class LiveWindow {
 public:
  explicit LiveWindow(std::size_t capacity = 3600);

  void push(const SensorReading& r);
  /// Readings of one series, oldest first.
  std::vector<SensorReading> series(const std::string& pseudonym, int object_id, int instance, int resource) const;
  /// Latest reading of every series matching the optional filters.
  std::vector<SensorReading> latest(const std::optional<std::string>& site = std::nullopt,
                                    const std::optional<std::string>& endpoint = std::nullopt) const;
  std::size_t capacity() const { return capacity_; }
  std::size_t series_count() const;

 private:
  using Key = std::tuple<std::string, int, int, int>;
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::map<Key, std::deque<SensorReading>> rings_;
};

}  // namespace makesense::datastore
