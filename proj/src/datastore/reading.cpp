#include "makesense/datastore/reading.hpp"

#include <bit>
#include <cstdint>

namespace makesense::datastore {
namespace {

constexpr std::uint8_t kVersion = 1;

void put_int(std::string& out, std::uint64_t v, int width) {
  for (int shift = (width - 1) * 8; shift >= 0; shift -= 8) out.push_back(static_cast<char>(v >> shift));
}

void put_str(std::string& out, std::string_view s) {
  if (s.size() > 0xFFFF) throw Error("reading field too long");
  put_int(out, s.size(), 2);
  out.append(s);
}

struct Reader {
  std::string_view in;
  std::size_t pos = 0;

  std::uint64_t take_int(int width) {
    if (in.size() - pos < static_cast<std::size_t>(width)) throw DecodeError("truncated reading");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | static_cast<std::uint8_t>(in[pos++]);
    return v;
  }
  std::string take_str() {
    const auto n = static_cast<std::size_t>(take_int(2));
    if (in.size() - pos < n) throw DecodeError("truncated reading");
    std::string s(in.substr(pos, n));
    pos += n;
    return s;
  }
};

}  // namespace

std::string encode_reading(const SensorReading& r) {
  std::string out;
  out.reserve(64 + r.pseudonym.size() + r.site.size() + r.endpoint.size() + r.unit.size());
  out.push_back(static_cast<char>(kVersion));
  put_str(out, r.pseudonym);
  put_str(out, r.site);
  put_str(out, r.endpoint);
  put_int(out, static_cast<std::uint32_t>(r.object_id), 4);
  put_int(out, static_cast<std::uint32_t>(r.instance), 4);
  put_int(out, static_cast<std::uint32_t>(r.resource), 4);
  put_int(out, std::bit_cast<std::uint64_t>(r.value), 8);
  put_str(out, r.unit);
  put_int(out, static_cast<std::uint64_t>(r.device_time.time_since_epoch().count()), 8);
  put_int(out, static_cast<std::uint64_t>(r.server_time.time_since_epoch().count()), 8);
  return out;
}

SensorReading decode_reading(std::string_view bytes) {
  Reader rd{bytes};
  if (rd.take_int(1) != kVersion) throw DecodeError("unsupported reading version");
  SensorReading r;
  r.pseudonym = rd.take_str();
  r.site = rd.take_str();
  r.endpoint = rd.take_str();
  r.object_id = static_cast<int>(static_cast<std::int32_t>(rd.take_int(4)));
  r.instance = static_cast<int>(static_cast<std::int32_t>(rd.take_int(4)));
  r.resource = static_cast<int>(static_cast<std::int32_t>(rd.take_int(4)));
  r.value = std::bit_cast<double>(rd.take_int(8));
  r.unit = rd.take_str();
  r.device_time = TimePoint{Duration{static_cast<std::int64_t>(rd.take_int(8))}};
  r.server_time = TimePoint{Duration{static_cast<std::int64_t>(rd.take_int(8))}};
  if (rd.pos != bytes.size()) throw DecodeError("trailing bytes after reading");
  return r;
}

}  // namespace makesense::datastore
