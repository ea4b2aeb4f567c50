#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "makesense/analytics/comfort.hpp"
#include "makesense/analytics/presence.hpp"
#include "makesense/analytics/quality.hpp"
#include "support/comfort_oracle.hpp"
#include "support/temp_dir.hpp"

using namespace makesense;
using namespace makesense::analytics;

TEST_CASE("presence: argmax of smoothed RSSI") {
  PresenceTracker p;
  CHECK(p.update("band-1", "egg-1", -60).nearest_egg == "egg-1");
  p.update("band-2", "egg-1", -50);
  p.update("band-2", "egg-2", -70);
  CHECK(p.estimate("band-2")->nearest_egg == "egg-1");
  CHECK(p.estimate("band-2")->smoothed.at("egg-1") == -50);
  // EWMA with alpha 0.3
  p.update("band-2", "egg-1", -80);
  CHECK(p.estimate("band-2")->smoothed.at("egg-1") == doctest::Approx(-59.0));
  // Below the threshold everywhere: not present.
  PresenceTracker q;
  CHECK_FALSE(q.update("b", "egg-1", -90).present);
  CHECK_FALSE(q.estimate("b")->nearest_egg.has_value());
  CHECK_FALSE(q.estimate("none").has_value());
}

TEST_CASE("presence: a common offset leaves the argmax unchanged") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    PresenceTracker a, b({0.3, -1e9});
    PresenceTracker a2({0.3, -1e9});
    const double offset = std::uniform_real_distribution<double>(-20, 20)(rng);
    for (int i = 0; i < 30; ++i) {
      const std::string egg = "egg-" + std::to_string(i % 4);
      const double r = -60 + noise(rng);
      a2.update("x", egg, r);
      b.update("x", egg, r + offset);
    }
    CHECK(a2.estimate("x")->nearest_egg == b.estimate("x")->nearest_egg);
  }
}

namespace {

ComfortPreference desk12() {
  ComfortPreference p;
  p.desk = "desk-12";
  p.temperature = 22;
  p.humidity = 45;
  p.email = "occupant@example.org";
  return p;
}

}  // namespace

TEST_CASE("comfort: proximity of exactly 75 cm is not occupancy") {
  ComfortEngine e;
  e.set_preference(desk12());
  e.start("desk-12");
  const TimePoint t = kDefaultEpoch;
  e.on_reading("desk-12", 3330, 75.0, t);
  CHECK_FALSE(e.occupied("desk-12", t));
  for (int i = 1; i <= 10; ++i) CHECK(e.on_reading("desk-12", 3303, 30.0, t + seconds(i)).empty());
  e.on_reading("desk-12", 3330, 74.9, t + seconds(11));
  CHECK(e.occupied("desk-12", t + seconds(11)));
  CHECK(e.occupied("desk-12", t + seconds(21)));
  CHECK_FALSE(e.occupied("desk-12", t + seconds(21) + milliseconds(1)));
}

TEST_CASE("comfort: three consecutive violations fire once, then cooldown") {
  ComfortEngine e;
  e.set_preference(desk12());
  e.start("desk-12");
  TimePoint t = kDefaultEpoch;
  std::vector<ComfortEvent> fired;
  for (int i = 0; i < 300; ++i) {  // 5 minutes at 1 s
    e.on_reading("desk-12", 3330, 50.0, t);
    for (auto& ev : e.on_reading("desk-12", 3303, 26.0, t)) fired.push_back(ev);
    t += seconds(1);
  }
  REQUIRE(fired.size() == 1);
  CHECK(fired[0].fired_at == kDefaultEpoch + seconds(2));
  CHECK(fired[0].buzzer_executed);
  CHECK(fired[0].measured == 26.0);
  CHECK(fired[0].target == 22.0);
  CHECK(fired[0].email_record == "occupant@example.org");
  // After the cooldown the still-present violation fires again.
  for (int i = 0; i < 400; ++i) {
    e.on_reading("desk-12", 3330, 50.0, t);
    for (auto& ev : e.on_reading("desk-12", 3303, 26.0, t)) fired.push_back(ev);
    t += seconds(1);
  }
  REQUIRE(fired.size() == 2);
  CHECK(fired[1].fired_at == kDefaultEpoch + seconds(602));
}

TEST_CASE("comfort: an in-band sample resets the debounce; stop silences") {
  ComfortEngine e;
  e.set_preference(desk12());
  CHECK_THROWS_AS(e.start("desk-99"), StalePreference);
  CHECK_THROWS_AS(e.preference("desk-99"), StalePreference);
  TimePoint t = kDefaultEpoch;
  e.on_reading("desk-12", 3330, 40, t);
  // Not monitoring yet.
  for (int i = 0; i < 5; ++i) CHECK(e.on_reading("desk-12", 3303, 30, t).empty());
  e.start("desk-12");
  CHECK(e.on_reading("desk-12", 3303, 30, t).empty());
  CHECK(e.on_reading("desk-12", 3303, 30, t).empty());
  CHECK(e.on_reading("desk-12", 3303, 23, t).empty());  // within 2 of 22
  CHECK(e.on_reading("desk-12", 3303, 30, t).empty());
  CHECK(e.on_reading("desk-12", 3303, 30, t).empty());
  CHECK(e.on_reading("desk-12", 3303, 30, t).size() == 1);
  e.stop("desk-12");
  CHECK(e.on_reading("desk-12", 3304, 90, t).empty());
  // Light has no target here.
  e.start("desk-12");
  for (int i = 0; i < 5; ++i) CHECK(e.on_reading("desk-12", 3301, 5000, t).empty());
}

TEST_CASE("comfort: engine matches the brute-force evaluator on random traces") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto trace = testing::random_comfort_trace(seed, 3, hours(1));
    std::vector<ComfortPreference> prefs;
    for (int d = 1; d <= 3; ++d) {
      ComfortPreference p;
      p.desk = "desk-" + std::to_string(d);
      p.temperature = 22;
      p.humidity = 45;
      p.light = 400;
      p.dust = 20;
      prefs.push_back(p);
    }
    ComfortEngine e;
    for (const auto& p : prefs) {
      e.set_preference(p);
      e.start(p.desk);
    }
    std::vector<ComfortEvent> got;
    for (const auto& r : trace)
      for (auto& ev : e.on_reading(r.desk, r.object_id, r.value, r.t)) got.push_back(ev);
    const auto want = testing::comfort_oracle(trace, prefs, ComfortConfig{});
    CHECK(got.size() == want.size());
    CHECK(got == want);
    CHECK_FALSE(want.empty());
    for (const auto& ev : got) CHECK(testing::occupied_at(trace, ev.desk, ev.fired_at, ComfortConfig{}));
  }
}

TEST_CASE("notification sink writes JSON lines") {
  makesense::testing::TempDir dir;
  NotificationSink sink(dir.path() / "mail.jsonl");
  sink.add({"desk-1", Variable::Temperature, 26, 22, kDefaultEpoch, true, "a@b.c"});
  REQUIRE(sink.lines().size() == 1);
  CHECK(sink.lines()[0].find("\"desk\":\"desk-1\"") != std::string::npos);
  CHECK(sink.lines()[0].find("window") != std::string::npos);
  CHECK(std::filesystem::file_size(dir.path() / "mail.jsonl") > 0);
}

namespace {

/// Independent recomputation of the outlier rule.
std::set<std::string> brute_flags(const QualityInput& in) {
  std::set<std::string> flagged;
  std::set<int> objs;
  for (auto& [e, s] : in)
    for (auto& [o, v] : s) objs.insert(o);
  for (int o : objs) {
    std::vector<std::pair<std::string, double>> means;
    for (auto& [e, s] : in) {
      double sum = 0;
      for (double x : s.at(o)) sum += x;
      means.emplace_back(e, sum / static_cast<double>(s.at(o).size()));
    }
    auto med = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    std::vector<double> ms;
    for (auto& [e, m] : means) ms.push_back(m);
    const double m0 = med(ms);
    std::vector<double> dev;
    for (double m : ms) dev.push_back(std::fabs(m - m0));
    const double mad = med(dev);
    for (auto& [e, m] : means)
      if (std::fabs(m - m0) > std::max({3 * mad, 0.1, 0.01 * std::fabs(m0)})) flagged.insert(e);
  }
  return flagged;
}

}  // namespace

TEST_CASE("quality: biased egg flagged, control run clean, dropout flagged") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> env(0, 0.3), meas(0, 0.05);
  auto make = [&](double bias, int silent_pct) {
    QualityInput in;
    for (int i = 0; i < 1000; ++i) {
      const double base = 21 + std::sin(i / 50.0) + env(rng);
      for (int e = 1; e <= 8; ++e) {
        if (e == 5 && i < silent_pct * 10) continue;
        in["egg-" + std::to_string(e)][3303].push_back(base + meas(rng) + (e == 3 ? bias : 0));
      }
    }
    return in;
  };
  const auto biased = make(2.0, 0);
  auto verdicts = quality_compare(biased, 1000);
  std::set<std::string> flagged;
  for (auto& v : verdicts)
    if (v.flagged) flagged.insert(v.egg);
  CHECK(flagged == std::set<std::string>{"egg-3"});
  CHECK(flagged == brute_flags(biased));

  const auto control = make(0.0, 0);
  for (auto& v : quality_compare(control, 1000)) CHECK_FALSE(v.flagged);
  CHECK(brute_flags(control).empty());

  const auto dropout = make(0.0, 30);
  flagged.clear();
  for (auto& v : quality_compare(dropout, 1000))
    if (v.flagged) flagged.insert(v.egg);
  CHECK(flagged == std::set<std::string>{"egg-5"});

  QualityInput thin{{"egg-1", {{3303, std::vector<double>(99, 1.0)}}}};
  CHECK_THROWS_AS(quality_compare(thin, 99), InsufficientData);
  CHECK(quality_csv(verdicts).starts_with("egg,object,mean"));
}
