#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "makesense/datastore/diary.hpp"
#include "makesense/datastore/storage_worker.hpp"
#include "support/temp_dir.hpp"

using namespace makesense;
using namespace makesense::datastore;
using makesense::testing::TempDir;

namespace {

SensorReading reading(const std::string& device, int object, TimePoint t, double v, const std::string& site = "s1") {
  SensorReading r;
  r.pseudonym = "p-" + device;
  r.site = site;
  r.endpoint = device;
  r.object_id = object;
  r.instance = 0;
  r.resource = 5700;
  r.value = v;
  r.unit = "Cel";
  r.device_time = t;
  r.server_time = t + milliseconds(7);
  return r;
}

}  // namespace

TEST_CASE("reading codec round-trips and rejects truncation") {
  const auto r = reading("egg-1", 3303, kDefaultEpoch + milliseconds(1234), -0.1);
  const std::string wire = encode_reading(r);
  CHECK(decode_reading(wire) == r);
  for (std::size_t n = 0; n < wire.size(); ++n) CHECK_THROWS_AS(decode_reading(wire.substr(0, n)), DecodeError);
  CHECK_THROWS_AS(decode_reading(wire + "x"), DecodeError);
}

TEST_CASE("append and query: conservation, ordering, ranges") {
  TempDir dir;
  HistoricalStore store({dir.path()});
  // 6000 readings from 10 devices, interleaved and partly out of order.
  std::vector<SensorReading> all;
  for (int i = 0; i < 600; ++i)
    for (int d = 0; d < 10; ++d) all.push_back(reading("egg-" + std::to_string(d), 3303, kDefaultEpoch + seconds(i), i + d));
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i + 1 < all.size(); i += 2)
    if (rng() % 3 == 0) std::swap(all[i], all[i + 1]);
  for (const auto& r : all) CHECK(store.append(r) == HistoricalStore::Append::Stored);

  const auto got = store.query({});
  REQUIRE(got.size() == 6000);
  for (std::size_t i = 1; i < got.size(); ++i) REQUIRE(got[i - 1].device_time <= got[i].device_time);

  QueryArgs one;
  one.endpoint = "egg-3";
  one.t0 = kDefaultEpoch + seconds(10);
  one.t1 = kDefaultEpoch + seconds(20);
  const auto slice = store.query(one);
  REQUIRE(slice.size() == 10);
  CHECK(slice.front().value == 13);
  CHECK(store.count(one) == 10);

  QueryArgs empty;
  empty.t0 = empty.t1 = kDefaultEpoch + seconds(5);
  CHECK(store.query(empty).empty());
  QueryArgs bad;
  bad.t0 = kDefaultEpoch + seconds(5);
  bad.t1 = kDefaultEpoch;
  CHECK_THROWS_AS(store.query(bad), BadRange);

  QueryArgs limited;
  limited.limit = 25;
  CHECK(store.query(limited).size() == 25);
}

TEST_CASE("duplicate identity is not stored twice") {
  TempDir dir;
  HistoricalStore store({dir.path()});
  const auto r = reading("egg-1", 3303, kDefaultEpoch, 1);
  CHECK(store.append(r) == HistoricalStore::Append::Stored);
  auto again = r;
  again.server_time += seconds(40);  // redelivered later
  CHECK(store.append(again) == HistoricalStore::Append::Duplicate);
  CHECK(store.stats().stored == 1);
  CHECK(store.stats().duplicates == 1);
  auto other = r;
  other.object_id = 3304;
  CHECK(store.append(other) == HistoricalStore::Append::Stored);
}

TEST_CASE("downsample matches brute-force bucket means") {
  TempDir dir;
  HistoricalStore store({dir.path()});
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(20, 3);
  std::vector<SensorReading> all;
  for (int i = 0; i < 6000; ++i) {
    all.push_back(reading("egg-1", 3303, kDefaultEpoch + milliseconds(i * 1000 + static_cast<int>(rng() % 1000)), noise(rng)));
    store.append(all.back());
  }
  QueryArgs a;
  a.t0 = kDefaultEpoch;
  a.t1 = kDefaultEpoch + seconds(6000);
  const auto buckets = store.downsample(a, 60);
  REQUIRE(buckets.size() == 60);
  for (std::size_t b = 0; b < 60; ++b) {
    const TimePoint lo = a.t0 + seconds(100) * static_cast<int>(b), hi = lo + seconds(100);
    double sum = 0, mn = 1e300, mx = -1e300;
    std::size_t n = 0;
    for (const auto& r : all) {
      if (r.device_time < lo || r.device_time >= hi) continue;
      sum += r.value;
      mn = std::min(mn, r.value);
      mx = std::max(mx, r.value);
      ++n;
    }
    CHECK(buckets[b].start == lo);
    CHECK(buckets[b].count == n);
    CHECK(buckets[b].mean == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-12));
    CHECK(buckets[b].min == mn);
    CHECK(buckets[b].max == mx);
  }
  CHECK_THROWS_AS(store.downsample(QueryArgs{}, 10), BadRange);
}

TEST_CASE("durability: a reopened store replays every flushed reading") {
  TempDir dir;
  std::vector<SensorReading> written;
  {
    HistoricalStore store({dir.path()});
    for (int i = 0; i < 500; ++i) {
      written.push_back(reading("egg-" + std::to_string(i % 3), 3303 + i % 2, kDefaultEpoch + seconds(i), i * 0.5,
                                i % 2 ? "siteA" : "siteB"));
      store.append(written.back());
    }
    store.flush();
  }
  HistoricalStore reopened({dir.path()});
  CHECK(reopened.stats().replayed == 500);
  auto got = reopened.query({});
  REQUIRE(got.size() == 500);
  std::map<std::tuple<std::string, int, TimePoint>, SensorReading> by_id;
  for (const auto& r : written) by_id[{r.pseudonym, r.object_id, r.device_time}] = r;
  for (const auto& r : got) CHECK(by_id.at({r.pseudonym, r.object_id, r.device_time}) == r);
  // Appending to the reopened store continues the same segments.
  reopened.append(reading("egg-9", 3303, kDefaultEpoch + seconds(1000), 1, "siteA"));
  reopened.close();
  HistoricalStore third({dir.path()});
  CHECK(third.query({}).size() == 501);
}

TEST_CASE("torn segment tail is cut back to the last whole record") {
  TempDir dir;
  {
    HistoricalStore store({dir.path()});
    for (int i = 0; i < 10; ++i) store.append(reading("egg-1", 3303, kDefaultEpoch + seconds(i), i));
  }
  const auto seg = dir.path() / "s1" / "2018-06-01.seg";
  REQUIRE(std::filesystem::exists(seg));
  const auto full = std::filesystem::file_size(seg);
  std::filesystem::resize_file(seg, full - 5);
  {
    HistoricalStore store({dir.path()});
    CHECK(store.query({}).size() == 9);
    CHECK(store.stats().corrupt_records == 1);
    store.append(reading("egg-1", 3303, kDefaultEpoch + seconds(50), 50));
  }
  HistoricalStore store({dir.path()});
  CHECK(store.query({}).size() == 10);
  CHECK(store.stats().corrupt_records == 0);
}

TEST_CASE("segments rotate per site and day; closed segments are mirrored") {
  TempDir dir;
  {
    HistoricalStore store({dir / "data", dir / "mirror"});
    store.append(reading("egg-1", 3303, kDefaultEpoch + hours(23), 1));
    store.append(reading("egg-1", 3303, kDefaultEpoch + hours(25), 2));
    store.append(reading("egg-2", 3303, kDefaultEpoch + hours(25), 3, "s2"));
    CHECK(store.stats().rotations == 1);
    CHECK(std::filesystem::exists(dir / "mirror" / "s1" / "2018-06-01.seg"));
    CHECK_FALSE(std::filesystem::exists(dir / "mirror" / "s1" / "2018-06-02.seg"));
  }
  CHECK(std::filesystem::exists(dir / "data" / "s1" / "2018-06-02.seg"));
  CHECK(std::filesystem::exists(dir / "data" / "s2" / "2018-06-02.seg"));
  CHECK(std::filesystem::exists(dir / "mirror" / "s1" / "2018-06-02.seg"));
  HistoricalStore mirror({dir / "mirror"});
  CHECK(mirror.query({}).size() == 3);
}

TEST_CASE("live window is bounded and ends at the latest reading") {
  LiveWindow w(5);
  for (int i = 0; i < 12; ++i) w.push(reading("egg-1", 3303, kDefaultEpoch + seconds(i), i));
  w.push(reading("egg-2", 3303, kDefaultEpoch, 100));
  const auto s = w.series("p-egg-1", 3303, 0, 5700);
  REQUIRE(s.size() == 5);
  CHECK(s.front().value == 7);
  CHECK(s.back().value == 11);
  CHECK(w.latest().size() == 2);
  CHECK(w.latest(std::nullopt, std::string("egg-2")).at(0).value == 100);
}

TEST_CASE("diary import: 144 slots, alignment, overlay, persistence") {
  TempDir dir;
  std::ostringstream csv;
  csv << "slot_start,activity_code,location,who\n";
  for (int i = 0; i < 144; ++i)
    csv << format_unix_seconds(kDefaultEpoch + minutes(10 * i)) << ',' << (i % 5) << ",kitchen,Alice Smith\n";
  auto who = [](const std::string& name) { return "who-" + std::to_string(name.size()); };
  {
    DiaryStore diary(dir / "diary.csv");
    CHECK(diary.import_csv(csv.str(), "site-tok", who) == 144);
    const auto slots = diary.overlay("site-tok", kDefaultEpoch + minutes(15), kDefaultEpoch + minutes(40));
    REQUIRE(slots.size() == 3);  // 10:00, 20:00, 30:00 slots overlap [15, 40)
    CHECK(slots[0].slot_start == kDefaultEpoch + minutes(10));
    CHECK(slots[0].who == "who-11");
    CHECK(diary.overlay("other", kDefaultEpoch, kDefaultEpoch + hours(24)).empty());
  }
  DiaryStore reloaded(dir / "diary.csv");
  CHECK(reloaded.size() == 144);
  std::ifstream raw(dir / "diary.csv");
  const std::string contents((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  CHECK(contents.find("Alice") == std::string::npos);

  const std::string bad = "slot_start,activity_code,location,who\n2018-06-01 12:00,1,kitchen,a\n2018-06-01 12:03,1,kitchen,a\n";
  DiaryStore d2;
  try {
    d2.import_csv(bad, "s", who);
    FAIL("expected BadCsv");
  } catch (const BadCsv& e) {
    CHECK(e.line() == 3);
  }
  CHECK(d2.size() == 0);
  CHECK_THROWS_AS(d2.import_csv("2018-06-01 12:00,x,kitchen,a\n", "s", who), BadCsv);
  CHECK_THROWS_AS(d2.import_csv("2018-06-01 12:00,1,kitchen\n", "s", who), BadCsv);
}

TEST_CASE("export: header-only when empty, lossless round trip, row count") {
  TempDir dir;
  HistoricalStore store({dir / "data"});
  CHECK(export_csv(store, {}, dir / "empty.csv") == 0);
  {
    std::ifstream in(dir / "empty.csv");
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all == std::string(kExportHeader) + "\n");
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 6000; ++i) {
    auto r = reading("egg," + std::to_string(i % 7), 3303, kDefaultEpoch + milliseconds(i * 997), u(rng));
    r.unit = "mg/mm3";
    store.append(r);
  }
  CHECK(export_csv(store, {}, dir / "all.csv") == 6000);
  std::ifstream in(dir / "all.csv");
  const auto back = read_export_csv(in);
  const auto orig = store.query({});
  REQUIRE(back.size() == orig.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    auto expect = orig[i];
    expect.site.clear();
    REQUIRE(back[i] == expect);
  }
}

TEST_CASE("storage worker: flush-then-ack, and a killed worker loses nothing") {
  TempDir dir;
  Scheduler clock;
  broker::Broker b(clock);
  b.declare_queue("store");
  b.bind(broker::Exchange::LiveData, "live.#", "store");
  HistoricalStore store({dir.path()});
  LiveWindow live;
  StorageWorker w(clock, b, store, &live, {"store"});
  w.start();
  for (int i = 0; i < 100; ++i)
    b.publish(broker::Exchange::LiveData, "live.egg-1.3303", encode_reading(reading("egg-1", 3303, kDefaultEpoch + seconds(i), i)));
  clock.run_for(milliseconds(500));
  CHECK(store.stats().stored == 0);
  CHECK(b.queue_stats("store").in_flight == 100);
  clock.run_for(milliseconds(600));
  CHECK(store.stats().stored == 100);
  CHECK(b.queue_stats("store").acked == 100);
  CHECK(live.series("p-egg-1", 3303, 0, 5700).size() == 100);

  for (int i = 100; i < 150; ++i)
    b.publish(broker::Exchange::LiveData, "live.egg-1.3303", encode_reading(reading("egg-1", 3303, kDefaultEpoch + seconds(i), i)));
  clock.run_for(milliseconds(100));
  w.kill();
  StorageWorker respawned(clock, b, store, &live, {"store"});
  respawned.start();
  clock.run_for(seconds(40));
  CHECK(store.stats().stored == 150);
  CHECK(store.stats().duplicates == 0);
  const auto s = b.queue_stats("store");
  CHECK(s.redelivered == 50);
  CHECK(s.in_flight == 0);
}
