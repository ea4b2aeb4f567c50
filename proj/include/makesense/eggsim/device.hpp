#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "makesense/eggsim/scenario.hpp"
#include "makesense/eggsim/signal.hpp"
#include "makesense/fota/updater.hpp"
#include "makesense/lwm2m/client.hpp"
#include "makesense/secure/endpoint.hpp"

namespace makesense::eggsim {

MAKESENSE_DEFINE_ERROR(ServerUnreachable, Error);

struct DeviceSpec {
  enum class Kind { Egg, Hub };
  Kind kind = Kind::Egg;
  std::string endpoint;
  std::string site;
  std::string room;
  int sample_interval_ms = 1000;
  std::vector<int> sensors;              // eggs
  std::vector<EnergyChannel> channels;   // hubs, one 3305 instance each
  double proximity_clamp_cm = 150;
  std::string firmware_version = "1.0.0";
  NoiseKeys noise;
  /// Proximity overrides while someone sits in front of the egg.
  std::vector<Pulse> proximity_pulses;
};

struct DeviceOptions {
  bool secure = true;
  std::optional<secure::PskIdentity> identity;
  int lifetime_s = 300;
  std::uint64_t seed = 1;
  coap::TransmissionParams params;
  Duration connect_retry{5000};
  Duration reboot_delay{1000};
};

/// One simulated IoTEgg or energy hub: object model with signal sources,
/// LWM2M client, optional PSK session and the firmware updater.
class Device {
 public:
  using ExtraSource = std::pair<lwm2m::Path, lwm2m::ObjectModel::Source>;

  Device(Scheduler& scheduler, std::unique_ptr<net::DatagramTransport> port, net::Address server, DeviceSpec spec,
         DeviceOptions options, std::vector<ExtraSource> extra = {});
  ~Device();
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  /// Handshake (when secured), then register.
  void boot();
  /// Power loss: no deregistration, partial downloads lost.
  void crash();
  /// Crash now, boot again after `delay`.
  void restart_after(Duration delay);

  void set_bias(int object_id, double offset, TimePoint from, std::optional<TimePoint> until = std::nullopt);
  void silence(int object_id, TimePoint from, std::optional<TimePoint> until = std::nullopt);

  const DeviceSpec& spec() const { return spec_; }
  const std::string& endpoint() const { return spec_.endpoint; }
  std::string firmware_version() const;
  lwm2m::Client& client() { return *client_; }
  const lwm2m::Client& client() const { return *client_; }
  lwm2m::ObjectModel& model() { return model_; }
  fota::Updater& updater() { return *updater_; }
  secure::SecureClient* secure_client() { return secure_.get(); }
  int boots() const { return boots_; }
  int buzzer_count() const { return buzzer_count_; }
  std::optional<secure::SecureClient::Status> last_connect() const { return last_connect_; }

  /// Signal value the egg would report for `object_id` at true time `t`, before faults.
  double clean_value(int object_id, TimePoint t) const;

 private:
  struct Window {
    TimePoint from;
    std::optional<TimePoint> until;
    bool covers(TimePoint t) const { return t >= from && (!until || t < *until); }
  };

  std::optional<lwm2m::Value> sensor_value(int object_id);
  bool install(ByteView image);

  Scheduler& scheduler_;
  std::unique_ptr<net::DatagramTransport> port_;
  std::unique_ptr<secure::SecureClient> secure_;
  DeviceSpec spec_;
  DeviceOptions options_;
  std::map<int, SignalModel> models_;
  lwm2m::ObjectModel model_;
  std::unique_ptr<lwm2m::Client> client_;
  std::unique_ptr<fota::Updater> updater_;
  std::map<int, std::pair<double, Window>> biases_;
  std::multimap<int, Window> silences_;
  std::uint64_t generation_ = 0;
  Scheduler::TimerId timer_ = 0;
  int boots_ = 0;
  int buzzer_count_ = 0;
  std::optional<secure::SecureClient::Status> last_connect_;
};

}  // namespace makesense::eggsim
