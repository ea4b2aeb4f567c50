#include "makesense/lwm2m/records.hpp"

#include <charconv>
#include <cmath>

#include "json.hpp"

namespace makesense::lwm2m {

std::string format_number(double v) {
  if (!std::isfinite(v)) throw BadPayload("non-finite value cannot be encoded");
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string value_to_string(const Value& v) {
  if (const double* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

std::string encode_records(const std::vector<Record>& records) {
  std::string out = "[";
  for (const auto& r : records) {
    if (out.size() > 1) out += ',';
    out += "{\"n\":";
    out += nlohmann::json(r.name).dump();
    if (const double* d = std::get_if<double>(&r.value)) {
      out += ",\"v\":";
      out += format_number(*d);
    } else {
      out += ",\"sv\":";
      out += nlohmann::json(std::get<std::string>(r.value)).dump();
    }
    if (r.time) {
      out += ",\"t\":";
      out += format_unix_seconds(*r.time);
    }
    out += '}';
  }
  out += ']';
  return out;
}

std::vector<Record> decode_records(std::string_view json) {
  const auto doc = nlohmann::json::parse(json, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) throw BadPayload("payload is not a JSON record list");
  std::vector<Record> out;
  out.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_object()) throw BadPayload("record is not an object");
    auto n = item.find("n");
    if (n == item.end() || !n->is_string()) throw BadPayload("record without \"n\"");
    Record r;
    r.name = n->get<std::string>();
    if (auto v = item.find("v"); v != item.end()) {
      if (!v->is_number()) throw BadPayload("\"v\" must be numeric");
      r.value = v->get<double>();
    } else if (auto sv = item.find("sv"); sv != item.end()) {
      if (!sv->is_string()) throw BadPayload("\"sv\" must be a string");
      r.value = sv->get<std::string>();
    } else {
      throw BadPayload("record without value");
    }
    if (auto t = item.find("t"); t != item.end()) {
      if (!t->is_number()) throw BadPayload("\"t\" must be numeric");
      r.time = from_unix_seconds(t->get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace makesense::lwm2m
