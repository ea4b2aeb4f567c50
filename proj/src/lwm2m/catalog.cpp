#include "makesense/lwm2m/catalog.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace makesense::lwm2m {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr std::array<ObjectSpec, 19> kObjects{{
    {0, "LwM2M Security", "", -1, false, false, -kInf, kInf},
    {1, "LwM2M Server", "", -1, false, false, -kInf, kInf},
    {2, "Access Control", "", -1, false, false, -kInf, kInf},
    {3, "Device", "", -1, false, false, -kInf, kInf},
    {4, "Connectivity Monitoring", "", -1, false, false, -kInf, kInf},
    {5, "Firmware Update", "", -1, false, false, -kInf, kInf},
    {6, "Location", "", -1, false, false, -kInf, kInf},
    {7, "Connectivity Statistics", "", -1, false, false, -kInf, kInf},
    {3301, "Illuminance", "uW/cm2", kValueResource, true, false, 0, kInf},
    {3303, "Temperature", "Cel", kValueResource, true, false, -40, 85},
    {3304, "Humidity", "%RH", kValueResource, true, false, 0, 100},
    {3305, "Power Measurement", "W", kValueResource, true, true, 0, kInf},
    {3311, "Light Control", "", -1, false, false, -kInf, kInf},
    {3324, "Loudness", "dB SPL", kValueResource, true, false, 0, kInf},
    {3325, "Concentration", "mg/mm3", kValueResource, true, false, 0, kInf},
    {3330, "Distance", "cm", kValueResource, true, false, 10, 150},
    {3338, "Buzzer", "", -1, false, false, -kInf, kInf},
    {3348, "Multi-state Selector", "", kMultiStateResource, true, false, 0, 6},
    {27000, "Wristband Proximity", "dBm", kValueResource, true, true, -kInf, 0},
}};

}  // namespace

std::span<const ObjectSpec> all_objects() { return kObjects; }

const ObjectSpec* find_object(int id) {
  auto it = std::find_if(kObjects.begin(), kObjects.end(), [id](const ObjectSpec& o) { return o.id == id; });
  return it == kObjects.end() ? nullptr : &*it;
}

}  // namespace makesense::lwm2m
