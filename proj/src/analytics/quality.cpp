#include "makesense/analytics/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "makesense/lwm2m/records.hpp"

namespace makesense::analytics {

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::vector<EggVerdict> quality_compare(const QualityInput& input, std::size_t expected, const QualityOptions& o) {
  if (input.empty()) throw InsufficientData("no eggs to compare");
  std::set<int> objects;
  for (const auto& [egg, sensors] : input)
    for (const auto& [obj, values] : sensors) objects.insert(obj);

  std::map<std::string, EggVerdict> out;
  for (const auto& [egg, sensors] : input) out[egg].egg = egg;

  for (int obj : objects) {
    std::map<std::string, double> means;
    for (const auto& [egg, sensors] : input) {
      auto it = sensors.find(obj);
      const std::size_t n = it == sensors.end() ? 0 : it->second.size();
      if (n < o.min_readings)
        throw InsufficientData(egg + " has " + std::to_string(n) + " readings for object " + std::to_string(obj));
      means[egg] = std::accumulate(it->second.begin(), it->second.end(), 0.0) / static_cast<double>(n);
    }
    std::vector<double> all;
    for (const auto& [egg, m] : means) all.push_back(m);
    const double med = median(all);
    std::vector<double> dev;
    for (double m : all) dev.push_back(std::abs(m - med));
    const double mad = median(dev);
    const double limit = std::max({o.mad_k * mad, o.min_deviation, o.min_relative_deviation * std::abs(med)});
    for (const auto& [egg, m] : means) {
      SensorVerdict v;
      v.object_id = obj;
      v.mean = m;
      v.median_of_means = med;
      v.mad = mad;
      v.readings = input.at(egg).at(obj).size();
      v.delivery_ratio = expected ? static_cast<double>(v.readings) / static_cast<double>(expected) : 1.0;
      v.outlier = std::abs(m - med) > limit;
      v.dropout = v.delivery_ratio < o.min_delivery_ratio;
      auto& ev = out[egg];
      ev.flagged = ev.flagged || v.outlier || v.dropout;
      ev.sensors.push_back(v);
    }
  }
  std::vector<EggVerdict> result;
  for (auto& [egg, v] : out) result.push_back(std::move(v));
  return result;
}

std::string quality_csv(const std::vector<EggVerdict>& verdicts) {
  std::string out = "egg,object,mean,median,mad,readings,ratio,outlier,dropout,flagged\n";
  for (const auto& e : verdicts)
    for (const auto& s : e.sensors) {
      out += e.egg + ',' + std::to_string(s.object_id) + ',' + lwm2m::format_number(s.mean) + ',' +
             lwm2m::format_number(s.median_of_means) + ',' + lwm2m::format_number(s.mad) + ',' +
             std::to_string(s.readings) + ',' + lwm2m::format_number(s.delivery_ratio) + ',' +
             (s.outlier ? "1" : "0") + ',' + (s.dropout ? "1" : "0") + ',' + (e.flagged ? "1" : "0") + '\n';
    }
  return out;
}

}  // namespace makesense::analytics
