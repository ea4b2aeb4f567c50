#include "makesense/lwm2m/object_model.hpp"

#include <charconv>

namespace makesense::lwm2m {

ObjectModel::Key ObjectModel::key_of(const Path& p) {
  if (!p.instance || !p.resource) throw BadPath("resource path required: " + p.to_string());
  return {p.object, *p.instance, *p.resource};
}

ObjectModel::Resource& ObjectModel::resource(const Path& p) {
  auto it = resources_.find(key_of(p));
  if (it == resources_.end()) throw PathNotFound(p.to_string());
  return it->second;
}

const ObjectModel::Resource& ObjectModel::resource(const Path& p) const {
  auto it = resources_.find(key_of(p));
  if (it == resources_.end()) throw PathNotFound(p.to_string());
  return it->second;
}

void ObjectModel::define(const Path& p, Value initial, unsigned access) {
  auto& r = resources_[key_of(p)];
  r.value = std::move(initial);
  r.access = access;
}

void ObjectModel::set_source(const Path& p, Source source) { resource(p).source = std::move(source); }
void ObjectModel::on_write(const Path& p, WriteHook hook) { resource(p).write_hook = std::move(hook); }
void ObjectModel::on_execute(const Path& p, ExecuteHook hook) { resource(p).execute_hook = std::move(hook); }

bool ObjectModel::has(const Path& path) const {
  for (auto it = resources_.lower_bound({path.object, 0, 0}); it != resources_.end(); ++it) {
    const auto& [obj, inst, res] = it->first;
    if (obj != path.object) break;
    if (path.covers(Path(obj, inst, res))) return true;
  }
  return false;
}

bool ObjectModel::readable(const Path& path) const {
  if (path.resource) {
    auto it = resources_.find(key_of(path));
    return it != resources_.end() && (it->second.access & kRead);
  }
  return has(path);
}

const Value& ObjectModel::get(const Path& p) const { return resource(p).value; }
void ObjectModel::set(const Path& p, Value v) { resource(p).value = std::move(v); }

std::optional<Value> ObjectModel::read(const Path& p, TimePoint device_time) const {
  const auto& r = resource(p);
  if (!(r.access & kRead)) throw NotReadable(p.to_string());
  if (r.source) return r.source(device_time);
  return r.value;
}

std::vector<Record> ObjectModel::read_records(const Path& path, TimePoint device_time) const {
  if (path.resource) {
    std::vector<Record> out;
    if (auto v = read(path, device_time)) out.push_back({path.to_string(), std::move(*v), device_time});
    return out;
  }
  if (!has(path)) throw PathNotFound(path.to_string());
  std::vector<Record> out;
  for (auto it = resources_.lower_bound({path.object, 0, 0}); it != resources_.end(); ++it) {
    const auto& [obj, inst, res] = it->first;
    if (obj != path.object) break;
    const Path p(obj, inst, res);
    if (!path.covers(p) || !(it->second.access & kRead)) continue;
    if (auto v = it->second.source ? it->second.source(device_time) : std::optional(it->second.value))
      out.push_back({p.to_string(), std::move(*v), device_time});
  }
  return out;
}

void ObjectModel::write(const Path& p, std::string_view text) {
  auto& r = resource(p);
  if (!(r.access & kWrite)) throw NotWritable(p.to_string());
  Value v;
  if (std::holds_alternative<double>(r.value)) {
    double d = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (ec != std::errc() || end != text.data() + text.size())
      throw BadPayload("expected a number for " + p.to_string());
    v = d;
  } else {
    v = std::string(text);
  }
  r.value = v;
  if (r.write_hook) r.write_hook(v);
}

void ObjectModel::execute(const Path& p, const std::string& args) {
  auto& r = resource(p);
  if (!(r.access & kExecute)) throw NotExecutable(p.to_string());
  if (r.execute_hook) r.execute_hook(args);
}

std::vector<Path> ObjectModel::instances() const {
  std::vector<Path> out;
  for (const auto& [key, r] : resources_) {
    const Path inst(std::get<0>(key), std::get<1>(key));
    if (out.empty() || out.back() != inst) out.push_back(inst);
  }
  return out;
}

}  // namespace makesense::lwm2m
