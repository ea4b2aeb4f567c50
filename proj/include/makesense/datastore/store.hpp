#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "makesense/datastore/reading.hpp"

namespace makesense::datastore {

MAKESENSE_DEFINE_ERROR(BadRange, Error);
MAKESENSE_DEFINE_ERROR(IoError, Error);

struct QueryArgs {
  std::optional<std::string> site;
  std::optional<std::string> endpoint;
  std::optional<std::string> pseudonym;
  std::optional<int> object_id;
  TimePoint t0{};
  TimePoint t1{TimePoint::max()};
  std::size_t limit = 0;  // 0: unlimited
};

struct SeriesInfo {
  std::string pseudonym;
  std::string site;
  std::string endpoint;
  int object_id = 0;
  int instance = 0;
  int resource = 0;
  std::string unit;
};

struct Bucket {
  const SeriesInfo* series = nullptr;
  TimePoint start;
  double mean = 0;
  double min = 0;
  double max = 0;
  std::size_t count = 0;
};

struct StoreStats {
  std::uint64_t stored = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t replayed = 0;
  std::uint64_t corrupt_records = 0;
  std::uint64_t rotations = 0;
  std::size_t segments = 0;
  std::size_t series = 0;
};

/// Append-only historical store. Each (site, day) partition is a segment file
/// of length-prefixed, CRC-protected records; the in-memory index holds every
/// series sorted by device time and is rebuilt by replaying the segments on open.
///
/// A reading is identified by (device pseudonym, object, instance, resource,
/// device time); appending the same identity twice is reported as a duplicate.
class HistoricalStore {
 public:
  struct Options {
    std::filesystem::path dir;
    std::optional<std::filesystem::path> mirror_dir;  // closed segments are copied here
    bool fsync = false;                               // flush() also forces data to disk
  };
  enum class Append { Stored, Duplicate };

  explicit HistoricalStore(Options options);
  ~HistoricalStore();
  HistoricalStore(const HistoricalStore&) = delete;
  HistoricalStore& operator=(const HistoricalStore&) = delete;

  Append append(const SensorReading& r);
  /// Pushes buffered segment writes to the OS (and to disk when fsync is set).
  void flush();
  /// Closes every open segment, copying each to the mirror directory.
  void close();

  /// Readings in [t0, t1) ordered by device time. Throws BadRange if t0 > t1.
  std::vector<SensorReading> query(const QueryArgs& args) const;
  std::size_t count(const QueryArgs& args) const;
  /// Per-series bucket aggregates over `buckets` equal slices of [t0, t1) (width (t1 - t0) / buckets,
  /// slice edges rounded up to whole milliseconds). Empty buckets are omitted.
  std::vector<Bucket> downsample(const QueryArgs& args, std::size_t buckets) const;

  std::vector<SeriesInfo> series() const;
  StoreStats stats() const;
  const std::filesystem::path& dir() const { return options_.dir; }

 private:
  struct Point {
    std::int64_t device_ms;
    std::int64_t server_ms;
    double value;
  };
  struct Series {
    SeriesInfo info;
    std::vector<Point> points;
  };
  struct SeriesKey {
    std::string pseudonym;
    int object_id, instance, resource;
    bool operator==(const SeriesKey&) const = default;
  };
  struct SeriesKeyHash {
    std::size_t operator()(const SeriesKey& k) const;
  };
  struct Segment {
    std::filesystem::path path;
    std::int64_t day = 0;
    std::FILE* file = nullptr;
    std::vector<bool> defined;  // series ids already described in this file
  };

  std::size_t series_id(const SeriesInfo& info);
  bool insert(Series& s, const Point& p);
  Segment& segment_for(const std::string& site, std::int64_t day);
  void close_segment(Segment& seg);
  void write_record(Segment& seg, const std::string& body);
  void replay();
  void replay_file(const std::filesystem::path& path);
  bool matches(const Series& s, const QueryArgs& args) const;

  Options options_;
  mutable std::shared_mutex mu_;
  std::vector<std::unique_ptr<Series>> series_;
  std::unordered_map<SeriesKey, std::size_t, SeriesKeyHash> index_;
  std::map<std::string, Segment> open_;  // site -> current segment
  StoreStats stats_;
};

}  // namespace makesense::datastore
