#pragma once

#include <functional>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "makesense/lwm2m/path.hpp"
#include "makesense/lwm2m/records.hpp"

namespace makesense::lwm2m {

MAKESENSE_DEFINE_ERROR(PathNotFound, Lwm2mError);
MAKESENSE_DEFINE_ERROR(NotReadable, Lwm2mError);
MAKESENSE_DEFINE_ERROR(NotWritable, Lwm2mError);
MAKESENSE_DEFINE_ERROR(NotExecutable, Lwm2mError);

enum Access : unsigned { kRead = 1, kWrite = 2, kExecute = 4 };

/// Client-side object/instance/resource tree.
class ObjectModel {
 public:
  /// Computes the value at a device timestamp; nullopt means "nothing to report now".
  using Source = std::function<std::optional<Value>(TimePoint device_time)>;
  using WriteHook = std::function<void(const Value&)>;
  using ExecuteHook = std::function<void(const std::string& args)>;

  void define(const Path& resource, Value initial, unsigned access);
  void set_source(const Path& resource, Source source);
  void on_write(const Path& resource, WriteHook hook);
  void on_execute(const Path& resource, ExecuteHook hook);

  bool has(const Path& path) const;
  bool readable(const Path& path) const;
  /// Stored value, bypassing sources and access checks.
  const Value& get(const Path& resource) const;
  void set(const Path& resource, Value v);

  /// Reads one resource (through its source, if any).
  std::optional<Value> read(const Path& resource, TimePoint device_time) const;
  /// Reads every readable resource at or below `path` as records.
  std::vector<Record> read_records(const Path& path, TimePoint device_time) const;
  /// Parses `text` into the resource's value type, stores it and runs the hook.
  void write(const Path& resource, std::string_view text);
  void execute(const Path& resource, const std::string& args = {});

  /// Object instances, in order, for the registration link list.
  std::vector<Path> instances() const;

 private:
  using Key = std::tuple<int, int, int>;
  struct Resource {
    Value value;
    unsigned access = 0;
    Source source;
    WriteHook write_hook;
    ExecuteHook execute_hook;
  };

  static Key key_of(const Path& p);
  Resource& resource(const Path& p);
  const Resource& resource(const Path& p) const;

  std::map<Key, Resource> resources_;
};

}  // namespace makesense::lwm2m
