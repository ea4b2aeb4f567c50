#include "makesense/eggsim/device.hpp"

#include <algorithm>

#include "makesense/lwm2m/catalog.hpp"

namespace makesense::eggsim {

using lwm2m::Path;

Device::Device(Scheduler& scheduler, std::unique_ptr<net::DatagramTransport> port, net::Address server,
               DeviceSpec spec, DeviceOptions options, std::vector<ExtraSource> extra)
    : scheduler_(scheduler), port_(std::move(port)), spec_(std::move(spec)), options_(std::move(options)) {
  net::DatagramTransport* transport = port_.get();
  if (options_.secure) {
    if (!options_.identity) throw Error("secured device " + spec_.endpoint + " has no PSK identity");
    secure_ = std::make_unique<secure::SecureClient>(scheduler_, *port_, server, *options_.identity, options_.seed);
    transport = secure_.get();
  }

  model_.define(Path(lwm2m::kDeviceObject, 0, lwm2m::device::kFirmwareVersion), spec_.firmware_version, lwm2m::kRead);
  model_.define(Path(lwm2m::kDeviceObject, 0, lwm2m::device::kReboot), 0.0, lwm2m::kExecute);
  model_.define(Path(lwm2m::kDeviceObject, 0, lwm2m::device::kCurrentTime), 0.0, lwm2m::kRead | lwm2m::kWrite);
  model_.on_execute(Path(lwm2m::kDeviceObject, 0, lwm2m::device::kReboot), [this](const std::string&) {
    const auto gen = generation_;
    scheduler_.after(milliseconds(50), [this, gen] {
      if (gen == generation_) restart_after(options_.reboot_delay);
    });
  });

  if (spec_.kind == DeviceSpec::Kind::Egg) {
    for (int obj : spec_.sensors) {
      SignalModel m = default_model(obj);
      if (obj == 3330) {
        m.hi = spec_.proximity_clamp_cm;
        m.baseline = spec_.proximity_clamp_cm;
        m.pulses = spec_.proximity_pulses;
      }
      models_[obj] = m;
      const Path p(obj, 0, lwm2m::find_object(obj)->measurement_resource);
      model_.define(p, 0.0, lwm2m::kRead);
      model_.set_source(p, [this, obj](TimePoint) { return sensor_value(obj); });
    }
    model_.define(Path(3311, 0, lwm2m::kColourResource), std::string("#000000"), lwm2m::kRead | lwm2m::kWrite);
    const Path buzzer(3338, 0, lwm2m::kOnOffResource);
    model_.define(buzzer, 0.0, lwm2m::kRead | lwm2m::kWrite | lwm2m::kExecute);
    model_.on_execute(buzzer, [this](const std::string&) { ++buzzer_count_; });
  } else {
    for (std::size_t i = 0; i < spec_.channels.size(); ++i) {
      const Path p(3305, static_cast<int>(i), lwm2m::kValueResource);
      model_.define(p, 0.0, lwm2m::kRead);
      const std::uint64_t seed = mix64(spec_.noise.measurement, i);
      model_.set_source(p, [this, i, seed](TimePoint) -> std::optional<lwm2m::Value> {
        const TimePoint now = scheduler_.now();
        for (auto [it, end] = silences_.equal_range(3305); it != end; ++it)
          if (it->second.covers(now)) return std::nullopt;
        return appliance_power(spec_.channels[i].profile, now, seed);
      });
    }
  }
  for (auto& [path, source] : extra) {
    model_.define(path, 0.0, lwm2m::kRead);
    model_.set_source(path, std::move(source));
  }

  lwm2m::ClientOptions co;
  co.endpoint = spec_.endpoint;
  co.lifetime_s = options_.lifetime_s;
  co.default_period = milliseconds(spec_.sample_interval_ms);
  client_ = std::make_unique<lwm2m::Client>(scheduler_, *transport, server, model_, co, mix64(options_.seed, 1),
                                            options_.params);
  updater_ = std::make_unique<fota::Updater>(scheduler_, *client_, model_,
                                             [this](ByteView image) { return install(image); });
}

Device::~Device() {
  ++generation_;
  scheduler_.cancel(timer_);
}

std::string Device::firmware_version() const {
  return lwm2m::value_to_string(model_.get(Path(lwm2m::kDeviceObject, 0, lwm2m::device::kFirmwareVersion)));
}

void Device::boot() {
  const auto gen = ++generation_;
  scheduler_.cancel(timer_);
  timer_ = 0;
  if (!secure_) {
    ++boots_;
    client_->start();
    return;
  }
  secure_->connect([this, gen](secure::SecureClient::Status status) {
    if (gen != generation_) return;
    last_connect_ = status;
    if (status == secure::SecureClient::Status::Connected) {
      ++boots_;
      client_->start();
      return;
    }
    timer_ = scheduler_.after(options_.connect_retry, [this, gen] {
      if (gen == generation_) boot();
    });
  });
}

void Device::crash() {
  ++generation_;
  scheduler_.cancel(timer_);
  timer_ = 0;
  client_->stop();
  updater_->power_loss();
  if (secure_) secure_->reset();
}

void Device::restart_after(Duration delay) {
  crash();
  const auto gen = generation_;
  timer_ = scheduler_.after(delay, [this, gen] {
    if (gen == generation_) boot();
  });
}

void Device::set_bias(int object_id, double offset, TimePoint from, std::optional<TimePoint> until) {
  biases_[object_id] = {offset, Window{from, until}};
}

void Device::silence(int object_id, TimePoint from, std::optional<TimePoint> until) {
  silences_.emplace(object_id, Window{from, until});
}

double Device::clean_value(int object_id, TimePoint t) const {
  return sample(models_.at(object_id), object_id, t, spec_.noise);
}

std::optional<lwm2m::Value> Device::sensor_value(int object_id) {
  const TimePoint now = scheduler_.now();
  for (auto [it, end] = silences_.equal_range(object_id); it != end; ++it)
    if (it->second.covers(now)) return std::nullopt;
  const SignalModel& m = models_.at(object_id);
  double v = sample(m, object_id, now, spec_.noise);
  if (auto b = biases_.find(object_id); b != biases_.end() && b->second.second.covers(now))
    v = std::clamp(v + b->second.first, m.lo, m.hi);
  return v;
}

bool Device::install(ByteView image) {
  // Secondary boot loader: the magic and CRC are checked once more before switching.
  bool ok = true;
  try {
    const auto info = fota::verify_image(image);
    model_.set(Path(lwm2m::kDeviceObject, 0, lwm2m::device::kFirmwareVersion), info.version);
  } catch (const fota::FotaError&) {
    ok = false;
  }
  const auto gen = generation_;
  scheduler_.post([this, gen] {
    if (gen == generation_) restart_after(options_.reboot_delay);
  });
  return ok;
}

}  // namespace makesense::eggsim
