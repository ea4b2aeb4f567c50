#include "makesense/eggsim/fleet.hpp"

#include <algorithm>

#include "makesense/lwm2m/catalog.hpp"

namespace makesense::eggsim {

using lwm2m::Path;

secure::PskIdentity Fleet::derive_identity(std::uint64_t seed, const std::string& endpoint) {
  Bytes key_material;
  put_u64(key_material, seed);
  const auto mac = secure::hmac_sha256(key_material, as_bytes("psk/" + endpoint));
  return secure::PskIdentity::make(endpoint, ByteView(mac.data(), 16));
}

Fleet::Fleet(Scheduler& scheduler, ScenarioSpec scenario, net::Address server, PortFactory ports,
             FleetOptions options, FaultPlan faults)
    : scheduler_(scheduler),
      scenario_(std::move(scenario)),
      options_(std::move(options)),
      faults_(std::move(faults)),
      t0_(scheduler.now()),
      alive_(std::make_shared<bool>(true)) {
  scenario_.validate();
  const std::uint64_t seed = scenario_.seed;
  std::size_t index = 0;

  auto make = [&](DeviceSpec spec, std::vector<Device::ExtraSource> extra) {
    DeviceOptions o;
    o.secure = options_.secure;
    o.identity = derive_identity(seed, spec.endpoint);
    o.lifetime_s = options_.lifetime_s;
    o.seed = mix64(seed, hash_string(spec.endpoint));
    o.params = options_.params;
    auto port = ports(spec, index++);
    auto dev = std::make_unique<Device>(scheduler_, std::move(port), server, std::move(spec), o, std::move(extra));
    by_endpoint_[dev->endpoint()] = dev.get();
    devices_.push_back(std::move(dev));
  };

  for (const auto& site : scenario_.sites) {
    std::vector<std::size_t> bands;
    for (std::size_t b = 0; b < scenario_.wristbands.size(); ++b)
      if (scenario_.wristbands[b].site == site.site_id) bands.push_back(b);

    for (int i = 1; i <= site.egg_count; ++i) {
      DeviceSpec spec;
      spec.kind = DeviceSpec::Kind::Egg;
      spec.endpoint = egg_endpoint(scenario_, site, i);
      spec.site = site.site_id;
      const Room& room = site.rooms[static_cast<std::size_t>(i - 1) % site.rooms.size()];
      spec.room = room.name;
      spec.sample_interval_ms = scenario_.sample_interval_ms;
      spec.sensors = default_sensors();
      spec.proximity_clamp_cm = scenario_.proximity_clamp_cm;
      spec.firmware_version = options_.firmware_version;
      spec.noise = {mix64(seed, hash_string(site.site_id + "/" + room.name)), mix64(seed, hash_string(spec.endpoint))};
      for (const auto& ep : scenario_.occupancy)
        if (ep.egg == spec.endpoint)
          spec.proximity_pulses.push_back({t0_ + ep.from, t0_ + ep.to, ep.distance_cm, Pulse::Mode::Set});

      std::vector<Device::ExtraSource> extra;
      for (std::size_t k = 0; k < bands.size(); ++k) {
        const std::size_t b = bands[k];
        const std::uint64_t key = mix64(seed, mix64(hash_string(spec.endpoint), b));
        extra.emplace_back(Path(27000, static_cast<int>(k), lwm2m::kValueResource),
                           [this, b, key, site_rooms = site.rooms, room](TimePoint) -> std::optional<lwm2m::Value> {
                             const TimePoint now = scheduler_.now();
                             const auto where = band_room(scenario_.wristbands[b].band_id, now);
                             if (!where) return std::nullopt;
                             auto it = std::find_if(site_rooms.begin(), site_rooms.end(),
                                                    [&](const Room& r) { return r.name == *where; });
                             const double d = room_distance(room, *it);
                             return rssi_at(d, scenario_.rssi_sigma_db,
                                            mix64(key, static_cast<std::uint64_t>(now.time_since_epoch().count())));
                           });
      }
      make(std::move(spec), std::move(extra));
    }

    if (!site.energy_channels.empty()) {
      DeviceSpec hub;
      hub.kind = DeviceSpec::Kind::Hub;
      hub.endpoint = hub_endpoint(site);
      hub.site = site.site_id;
      hub.room = site.rooms.front().name;
      hub.sample_interval_ms = scenario_.energy_interval_ms;
      hub.channels = site.energy_channels;
      hub.firmware_version = options_.firmware_version;
      hub.noise = {mix64(seed, hash_string(site.site_id)), mix64(seed, hash_string(hub.endpoint))};
      make(std::move(hub), {});
    }
  }
}

Fleet::~Fleet() {
  alive_.reset();
  for (auto id : timers_) scheduler_.cancel(id);
}

void Fleet::provision(secure::KeyStore& keys) const {
  for (const auto& d : devices_) keys.add(derive_identity(scenario_.seed, d->endpoint()));
}

void Fleet::start() {
  for (const auto& f : faults_.faults) {
    Device* dev = find(f.egg);
    if (!dev) throw ConfigError("fault targets unknown device " + f.egg);
    const TimePoint at = t0_ + f.at;
    const std::optional<TimePoint> until = f.until ? std::optional<TimePoint>(t0_ + *f.until) : std::nullopt;
    switch (f.kind) {
      case Fault::Kind::Crash: {
        std::weak_ptr<bool> alive = alive_;
        timers_.push_back(scheduler_.at(at, [dev, f, alive] {
          if (alive.expired()) return;
          if (f.restart_after)
            dev->restart_after(*f.restart_after);
          else
            dev->crash();
        }));
        break;
      }
      case Fault::Kind::Silent:
        dev->silence(f.object_id, at, until);
        break;
      case Fault::Kind::Bias:
        dev->set_bias(f.object_id, f.offset, at, until);
        break;
    }
  }
  for (auto& d : devices_) d->boot();
}

void Fleet::stop() {
  for (auto& d : devices_) d->crash();
}

void Fleet::sample_until(TimePoint t) {
  for (auto& d : devices_) d->client().set_sample_until(t);
}

std::vector<Device*> Fleet::devices() const {
  std::vector<Device*> out;
  for (const auto& d : devices_) out.push_back(d.get());
  return out;
}

std::vector<Device*> Fleet::eggs() const {
  std::vector<Device*> out;
  for (const auto& d : devices_)
    if (d->spec().kind == DeviceSpec::Kind::Egg) out.push_back(d.get());
  return out;
}

Device* Fleet::find(const std::string& endpoint) const {
  auto it = by_endpoint_.find(endpoint);
  return it == by_endpoint_.end() ? nullptr : it->second;
}

std::optional<std::string> Fleet::band_room(const std::string& band_id, TimePoint t) const {
  for (const auto& b : scenario_.wristbands) {
    if (b.band_id != band_id) continue;
    for (const auto& st : b.schedule)
      if (t >= t0_ + st.from && t < t0_ + st.to) return st.room;
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace makesense::eggsim
