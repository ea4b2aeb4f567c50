#include "makesense/datastore/store.hpp"

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <mutex>

#include "makesense/common/bytes.hpp"
#include "makesense/common/random.hpp"

namespace fs = std::filesystem;

namespace makesense::datastore {
namespace {

constexpr char kMagic[5] = {'M', 'S', 'E', 'G', 1};
constexpr std::int64_t kDayMs = 86'400'000;
constexpr std::uint32_t kMaxRecord = 1 << 20;

void put(std::string& out, std::uint64_t v, int width) {
  for (int shift = (width - 1) * 8; shift >= 0; shift -= 8) out.push_back(static_cast<char>(v >> shift));
}
void put_str(std::string& out, const std::string& s) {
  put(out, s.size(), 2);
  out += s;
}

struct Cursor {
  std::string_view in;
  std::size_t pos = 0;
  bool ok = true;
  std::uint64_t take(int width) {
    if (in.size() - pos < static_cast<std::size_t>(width)) {
      ok = false;
      return 0;
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | static_cast<std::uint8_t>(in[pos++]);
    return v;
  }
  std::string take_str() {
    const auto n = static_cast<std::size_t>(take(2));
    if (!ok || in.size() - pos < n) {
      ok = false;
      return {};
    }
    std::string s(in.substr(pos, n));
    pos += n;
    return s;
  }
};

std::string day_name(std::int64_t day) {
  return format_iso8601(TimePoint{Duration{day * kDayMs}}).substr(0, 10);
}

}  // namespace

std::size_t HistoricalStore::SeriesKeyHash::operator()(const SeriesKey& k) const {
  return mix64(hash_string(k.pseudonym), mix64(static_cast<std::uint64_t>(k.object_id) << 32 |
                                               static_cast<std::uint64_t>(k.instance) << 16 |
                                               static_cast<std::uint64_t>(k.resource)));
}

HistoricalStore::HistoricalStore(Options options) : options_(std::move(options)) {
  std::error_code ec;
  fs::create_directories(options_.dir, ec);
  if (ec) throw IoError("cannot create store directory " + options_.dir.string() + ": " + ec.message());
  if (options_.mirror_dir) fs::create_directories(*options_.mirror_dir);
  replay();
}

HistoricalStore::~HistoricalStore() {
  try {
    close();
  } catch (...) {
  }
}

std::size_t HistoricalStore::series_id(const SeriesInfo& info) {
  SeriesKey key{info.pseudonym, info.object_id, info.instance, info.resource};
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const std::size_t id = series_.size();
  series_.push_back(std::make_unique<Series>(Series{info, {}}));
  index_.emplace(std::move(key), id);
  return id;
}

bool HistoricalStore::insert(Series& s, const Point& p) {
  auto& v = s.points;
  if (v.empty() || v.back().device_ms < p.device_ms) {
    v.push_back(p);
    return true;
  }
  auto it = std::lower_bound(v.begin(), v.end(), p.device_ms,
                             [](const Point& a, std::int64_t t) { return a.device_ms < t; });
  if (it != v.end() && it->device_ms == p.device_ms) return false;
  v.insert(it, p);
  return true;
}

HistoricalStore::Segment& HistoricalStore::segment_for(const std::string& site, std::int64_t day) {
  auto it = open_.find(site);
  if (it != open_.end()) {
    if (day <= it->second.day) return it->second;
    close_segment(it->second);
    open_.erase(it);
    ++stats_.rotations;
  }
  Segment seg;
  seg.day = day;
  const fs::path site_dir = options_.dir / site;
  fs::create_directories(site_dir);
  seg.path = site_dir / (day_name(day) + ".seg");
  const bool fresh = !fs::exists(seg.path) || fs::file_size(seg.path) == 0;
  seg.file = std::fopen(seg.path.c_str(), "ab");
  if (!seg.file) throw IoError("cannot open segment " + seg.path.string());
  std::setvbuf(seg.file, nullptr, _IOFBF, 1 << 16);
  if (fresh) {
    std::fwrite(kMagic, 1, sizeof kMagic, seg.file);
    ++stats_.segments;
  }
  return open_.emplace(site, std::move(seg)).first->second;
}

void HistoricalStore::close_segment(Segment& seg) {
  if (!seg.file) return;
  std::fflush(seg.file);
  if (options_.fsync) ::fsync(fileno(seg.file));
  std::fclose(seg.file);
  seg.file = nullptr;
  if (options_.mirror_dir) {
    const fs::path target = *options_.mirror_dir / seg.path.parent_path().filename() / seg.path.filename();
    fs::create_directories(target.parent_path());
    fs::copy_file(seg.path, target, fs::copy_options::overwrite_existing);
  }
}

void HistoricalStore::write_record(Segment& seg, const std::string& body) {
  std::string frame;
  frame.reserve(8 + body.size());
  put(frame, body.size(), 4);
  put(frame, crc32(as_bytes(body)), 4);
  frame += body;
  if (std::fwrite(frame.data(), 1, frame.size(), seg.file) != frame.size())
    throw IoError("short write to " + seg.path.string());
}

HistoricalStore::Append HistoricalStore::append(const SensorReading& r) {
  std::unique_lock lock(mu_);
  const std::size_t id = series_id(SeriesInfo{r.pseudonym, r.site, r.endpoint, r.object_id, r.instance, r.resource, r.unit});
  const Point p{r.device_time.time_since_epoch().count(), r.server_time.time_since_epoch().count(), r.value};
  if (!insert(*series_[id], p)) {
    ++stats_.duplicates;
    return Append::Duplicate;
  }
  std::int64_t day = p.server_ms / kDayMs;
  if (p.server_ms < 0 && p.server_ms % kDayMs) --day;
  Segment& seg = segment_for(r.site, day);
  if (seg.defined.size() <= id) seg.defined.resize(id + 1, false);
  if (!seg.defined[id]) {
    const auto& info = series_[id]->info;
    std::string def = "S";
    put(def, id, 4);
    put_str(def, info.pseudonym);
    put_str(def, info.site);
    put_str(def, info.endpoint);
    put(def, static_cast<std::uint32_t>(info.object_id), 4);
    put(def, static_cast<std::uint32_t>(info.instance), 4);
    put(def, static_cast<std::uint32_t>(info.resource), 4);
    put_str(def, info.unit);
    write_record(seg, def);
    seg.defined[id] = true;
  }
  std::string body = "P";
  body.reserve(29);
  put(body, id, 4);
  put(body, static_cast<std::uint64_t>(p.device_ms), 8);
  put(body, static_cast<std::uint64_t>(p.server_ms), 8);
  put(body, std::bit_cast<std::uint64_t>(p.value), 8);
  write_record(seg, body);
  ++stats_.stored;
  return Append::Stored;
}

void HistoricalStore::flush() {
  std::unique_lock lock(mu_);
  for (auto& [site, seg] : open_) {
    if (std::fflush(seg.file) != 0) throw IoError("flush failed for " + seg.path.string());
    if (options_.fsync) ::fsync(fileno(seg.file));
  }
}

void HistoricalStore::close() {
  std::unique_lock lock(mu_);
  for (auto& [site, seg] : open_) close_segment(seg);
  open_.clear();
}

void HistoricalStore::replay() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(options_.dir))
    if (entry.is_regular_file() && entry.path().extension() == ".seg") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  stats_.segments = files.size();
  for (const auto& f : files) replay_file(f);
}

void HistoricalStore::replay_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t good = 0;
  if (data.size() >= sizeof kMagic && data.compare(0, sizeof kMagic, std::string(kMagic, sizeof kMagic)) == 0) {
    std::unordered_map<std::uint32_t, std::size_t> local;
    std::size_t pos = sizeof kMagic;
    good = pos;
    while (pos < data.size()) {
      Cursor head{std::string_view(data).substr(pos, 8)};
      const auto len = static_cast<std::uint32_t>(head.take(4));
      const auto crc = static_cast<std::uint32_t>(head.take(4));
      if (!head.ok || len == 0 || len > kMaxRecord || data.size() - pos - 8 < len) break;
      const std::string_view body = std::string_view(data).substr(pos + 8, len);
      if (crc32(as_bytes(body)) != crc) break;
      Cursor c{body, 1};
      if (body[0] == 'S') {
        const auto id = static_cast<std::uint32_t>(c.take(4));
        SeriesInfo info;
        info.pseudonym = c.take_str();
        info.site = c.take_str();
        info.endpoint = c.take_str();
        info.object_id = static_cast<int>(c.take(4));
        info.instance = static_cast<int>(c.take(4));
        info.resource = static_cast<int>(c.take(4));
        info.unit = c.take_str();
        if (!c.ok) break;
        local[id] = series_id(info);
      } else if (body[0] == 'P') {
        const auto id = static_cast<std::uint32_t>(c.take(4));
        Point p;
        p.device_ms = static_cast<std::int64_t>(c.take(8));
        p.server_ms = static_cast<std::int64_t>(c.take(8));
        p.value = std::bit_cast<double>(c.take(8));
        auto it = local.find(id);
        if (!c.ok || it == local.end()) break;
        if (insert(*series_[it->second], p))
          ++stats_.replayed;
      } else {
        break;
      }
      pos += 8 + len;
      good = pos;
    }
  }
  if (good < data.size()) {
    // Torn or corrupt tail: keep the verified prefix so later appends stay readable.
    ++stats_.corrupt_records;
    in.close();
    if (good == 0) {
      std::ofstream(path, std::ios::binary | std::ios::trunc).write(kMagic, sizeof kMagic);
    } else {
      fs::resize_file(path, good);
    }
  }
}

bool HistoricalStore::matches(const Series& s, const QueryArgs& a) const {
  return (!a.site || s.info.site == *a.site) && (!a.endpoint || s.info.endpoint == *a.endpoint) &&
         (!a.pseudonym || s.info.pseudonym == *a.pseudonym) && (!a.object_id || s.info.object_id == *a.object_id);
}

std::vector<SensorReading> HistoricalStore::query(const QueryArgs& args) const {
  if (args.t0 > args.t1) throw BadRange("t0 after t1");
  std::shared_lock lock(mu_);
  struct Hit {
    std::int64_t t;
    std::size_t series;
    std::size_t index;
  };
  std::vector<Hit> hits;
  const std::int64_t t0 = args.t0.time_since_epoch().count(), t1 = args.t1.time_since_epoch().count();
  for (std::size_t sid = 0; sid < series_.size(); ++sid) {
    const auto& s = *series_[sid];
    if (!matches(s, args)) continue;
    auto lo = std::lower_bound(s.points.begin(), s.points.end(), t0,
                               [](const Point& p, std::int64_t t) { return p.device_ms < t; });
    auto hi = std::lower_bound(lo, s.points.end(), t1, [](const Point& p, std::int64_t t) { return p.device_ms < t; });
    for (auto it = lo; it != hi; ++it)
      hits.push_back({it->device_ms, sid, static_cast<std::size_t>(it - s.points.begin())});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.t < b.t; });
  if (args.limit && hits.size() > args.limit) hits.resize(args.limit);
  std::vector<SensorReading> out;
  out.reserve(hits.size());
  for (const auto& h : hits) {
    const auto& s = *series_[h.series];
    const Point& p = s.points[h.index];
    out.push_back(SensorReading{s.info.pseudonym, s.info.site, s.info.endpoint, s.info.object_id, s.info.instance,
                                s.info.resource, p.value, s.info.unit, TimePoint{Duration{p.device_ms}},
                                TimePoint{Duration{p.server_ms}}});
  }
  return out;
}

std::size_t HistoricalStore::count(const QueryArgs& args) const {
  if (args.t0 > args.t1) throw BadRange("t0 after t1");
  std::shared_lock lock(mu_);
  const std::int64_t t0 = args.t0.time_since_epoch().count(), t1 = args.t1.time_since_epoch().count();
  std::size_t n = 0;
  for (const auto& sp : series_) {
    if (!matches(*sp, args)) continue;
    auto lo = std::lower_bound(sp->points.begin(), sp->points.end(), t0,
                               [](const Point& p, std::int64_t t) { return p.device_ms < t; });
    auto hi = std::lower_bound(lo, sp->points.end(), t1, [](const Point& p, std::int64_t t) { return p.device_ms < t; });
    n += static_cast<std::size_t>(hi - lo);
  }
  return args.limit ? std::min(n, args.limit) : n;
}

std::vector<Bucket> HistoricalStore::downsample(const QueryArgs& args, std::size_t buckets) const {
  if (args.t0 >= args.t1 || args.t1 == TimePoint::max()) throw BadRange("downsampling needs a finite, non-empty range");
  if (buckets == 0) throw BadRange("bucket count must be positive");
  std::shared_lock lock(mu_);
  const std::int64_t t0 = args.t0.time_since_epoch().count(), t1 = args.t1.time_since_epoch().count();
  const std::int64_t span = t1 - t0;
  const auto n = static_cast<std::int64_t>(buckets);
  std::vector<Bucket> out;
  for (const auto& sp : series_) {
    if (!matches(*sp, args)) continue;
    auto lo = std::lower_bound(sp->points.begin(), sp->points.end(), t0,
                               [](const Point& p, std::int64_t t) { return p.device_ms < t; });
    std::vector<Bucket> local(buckets);
    double sum = 0;
    std::int64_t current = -1;
    auto finish = [&] {
      if (current >= 0) local[static_cast<std::size_t>(current)].mean = sum / static_cast<double>(local[static_cast<std::size_t>(current)].count);
    };
    for (auto it = lo; it != sp->points.end() && it->device_ms < t1; ++it) {
      const std::int64_t i = static_cast<std::int64_t>((static_cast<__int128>(it->device_ms - t0) * n) / span);
      if (i != current) {
        finish();
        current = i;
        sum = 0;
        auto& b = local[static_cast<std::size_t>(i)];
        b.series = &sp->info;
        b.start = TimePoint{Duration{t0 + static_cast<std::int64_t>((static_cast<__int128>(span) * i + n - 1) / n)}};
        b.min = b.max = it->value;
      }
      auto& b = local[static_cast<std::size_t>(i)];
      sum += it->value;
      ++b.count;
      b.min = std::min(b.min, it->value);
      b.max = std::max(b.max, it->value);
    }
    finish();
    for (auto& b : local)
      if (b.count) out.push_back(b);
  }
  return out;
}

std::vector<SeriesInfo> HistoricalStore::series() const {
  std::shared_lock lock(mu_);
  std::vector<SeriesInfo> out;
  for (const auto& s : series_) out.push_back(s->info);
  return out;
}

StoreStats HistoricalStore::stats() const {
  std::shared_lock lock(mu_);
  StoreStats s = stats_;
  s.series = series_.size();
  return s;
}

}  // namespace makesense::datastore
