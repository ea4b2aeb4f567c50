#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "makesense/common/error.hpp"

namespace makesense::lwm2m {

MAKESENSE_DEFINE_ERROR(Lwm2mError, Error);
MAKESENSE_DEFINE_ERROR(BadPath, Lwm2mError);
MAKESENSE_DEFINE_ERROR(BadLinkFormat, Lwm2mError);
MAKESENSE_DEFINE_ERROR(UnknownObject, Lwm2mError);

/// /object[/instance[/resource]]
struct Path {
  int object = 0;
  std::optional<int> instance;
  std::optional<int> resource;

  Path() = default;
  Path(int obj) : object(obj) {}
  Path(int obj, int inst) : object(obj), instance(inst) {}
  Path(int obj, int inst, int res) : object(obj), instance(inst), resource(res) {}

  static Path parse(std::string_view text);
  std::string to_string() const;
  /// The object-instance prefix of this path.
  Path instance_path() const { return Path(object, instance.value_or(0)); }
  /// True if `other` equals this path or lies below it.
  bool covers(const Path& other) const;

  auto operator<=>(const Path&) const = default;
};

/// Parses "</3303/0>,</3304/0>" into object/instance paths; attributes after ';' are ignored.
std::vector<Path> parse_links(std::string_view text);
std::string format_links(const std::vector<Path>& links);

/// Throws UnknownObject unless every link names a catalog object.
void check_known_objects(const std::vector<Path>& links);

}  // namespace makesense::lwm2m
