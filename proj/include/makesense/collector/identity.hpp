#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "makesense/common/random.hpp"
#include "makesense/lwm2m/path.hpp"

namespace makesense::collector {

/// A raw endpoint name splits into "<site>:<device>"; names without a site
/// prefix belong to the configured default site.
struct EndpointName {
  std::string site;
  std::string device;
};

EndpointName split_endpoint(const std::string& raw, const std::string& default_site);

/// Raw identifier -> random 128-bit token (32 hex digits), assigned at first
/// sight and appended to an owner-only file kept apart from every data store.
class PseudonymTable {
 public:
  explicit PseudonymTable(std::optional<std::filesystem::path> file = std::nullopt,
                          std::optional<std::uint64_t> seed = std::nullopt);

  std::string token(const std::string& raw);
  std::optional<std::string> lookup(const std::string& raw) const;
  /// Reverse lookup for operators holding the linkage file.
  std::optional<std::string> raw_of(const std::string& token) const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> file_;
  RandomSource rng_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> forward_;
  std::unordered_map<std::string, std::string> reverse_;
};

/// Devices or (device, object instance) pairs excluded from collection.
class Blacklist {
 public:
  struct Entry {
    std::string endpoint;
    std::optional<lwm2m::Path> path;
    auto operator<=>(const Entry&) const = default;
  };
  using Listener = std::function<void(const Entry& entry, bool added)>;

  explicit Blacklist(std::optional<std::filesystem::path> file = std::nullopt);

  /// Returns false if already present.
  bool add(const Entry& e);
  bool remove(const Entry& e);
  /// True if the whole endpoint, or an entry covering `path`, is listed.
  bool blocks(const std::string& endpoint, const lwm2m::Path& path) const;
  std::vector<Entry> entries() const;
  void on_change(Listener l);

 private:
  void save_locked() const;

  std::optional<std::filesystem::path> file_;
  mutable std::mutex mu_;
  std::set<Entry> entries_;
  std::vector<Listener> listeners_;
};

}  // namespace makesense::collector
