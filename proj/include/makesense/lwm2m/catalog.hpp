#pragma once

#include <span>
#include <string_view>

namespace makesense::lwm2m {

struct ObjectSpec {
  int id;
  std::string_view name;
  std::string_view unit;
  int measurement_resource;  // -1 when the object carries no periodic measurement
  bool sensor;               // readable measurement the collector observes
  bool extension;
  double min_value;
  double max_value;
};

inline constexpr int kValueResource = 5700;
inline constexpr int kUnitResource = 5701;
inline constexpr int kOnOffResource = 5850;
inline constexpr int kColourResource = 5706;
inline constexpr int kMultiStateResource = 5547;

inline constexpr int kDeviceObject = 3;
inline constexpr int kFirmwareObject = 5;
inline constexpr int kIlluminance = 3301;
inline constexpr int kTemperature = 3303;
inline constexpr int kHumidity = 3304;
inline constexpr int kPower = 3305;
inline constexpr int kLightControl = 3311;
inline constexpr int kLoudness = 3324;
inline constexpr int kDust = 3325;
inline constexpr int kDistance = 3330;
inline constexpr int kBuzzer = 3338;
inline constexpr int kGesture = 3348;
inline constexpr int kWristband = 27000;

namespace device {
inline constexpr int kManufacturer = 0;
inline constexpr int kModel = 1;
inline constexpr int kSerial = 2;
inline constexpr int kFirmwareVersion = 3;
inline constexpr int kReboot = 4;
inline constexpr int kFactoryReset = 5;
inline constexpr int kCurrentTime = 13;
}  // namespace device

namespace firmware {
inline constexpr int kPackageUri = 1;
inline constexpr int kUpdate = 2;
inline constexpr int kState = 3;
inline constexpr int kResult = 5;
}  // namespace firmware

std::span<const ObjectSpec> all_objects();
/// nullptr for ids outside the catalog.
const ObjectSpec* find_object(int id);

}  // namespace makesense::lwm2m
