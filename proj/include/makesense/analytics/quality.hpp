#pragma once

#include <map>
#include <string>
#include <vector>

#include "makesense/common/error.hpp"

namespace makesense::analytics {

MAKESENSE_DEFINE_ERROR(InsufficientData, Error);

struct QualityOptions {
  double mad_k = 3.0;
  /// Deviations at or below this (sensor units) are never flagged. Identical
  /// co-located eggs drive the MAD towards zero, where any jitter would count.
  double min_deviation = 0.1;
  /// Same idea scaled to the reading: light sits in the hundreds of lux, where
  /// 0.1 is below what the sensor resolves.
  double min_relative_deviation = 0.01;
  double min_delivery_ratio = 0.95;
  std::size_t min_readings = 100;
};

struct SensorVerdict {
  int object_id = 0;
  double mean = 0;
  double median_of_means = 0;
  double mad = 0;
  std::size_t readings = 0;
  double delivery_ratio = 0;
  bool outlier = false;
  bool dropout = false;
};

struct EggVerdict {
  std::string egg;
  bool flagged = false;
  std::vector<SensorVerdict> sensors;
};

/// egg -> object id -> values in the window.
using QualityInput = std::map<std::string, std::map<int, std::vector<double>>>;

/// Per sensor, an egg is an outlier when |mean - median of means| > max(k * MAD, min_deviation,
/// min_relative_deviation * |median|),
/// and drops out when it delivered fewer than the ratio of `expected` readings.
/// Throws InsufficientData if any egg has fewer than min_readings for a sensor.
std::vector<EggVerdict> quality_compare(const QualityInput& input, std::size_t expected_per_sensor,
                                        const QualityOptions& options = {});

double median(std::vector<double> v);

/// CSV report: egg,object,mean,median,mad,readings,ratio,outlier,dropout,flagged
std::string quality_csv(const std::vector<EggVerdict>& verdicts);

}  // namespace makesense::analytics
