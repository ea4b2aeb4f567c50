#include "makesense/collector/identity.hpp"

#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace makesense::collector {

EndpointName split_endpoint(const std::string& raw, const std::string& default_site) {
  const auto colon = raw.find(':');
  if (colon == std::string::npos) return {default_site, raw};
  return {raw.substr(0, colon), raw.substr(colon + 1)};
}

namespace {

void restrict_permissions(const fs::path& p) {
  std::error_code ec;
  fs::permissions(p, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace, ec);
}

}  // namespace

PseudonymTable::PseudonymTable(std::optional<fs::path> file, std::optional<std::uint64_t> seed)
    : file_(std::move(file)), rng_(seed) {
  if (!file_) return;
  if (file_->has_parent_path()) fs::create_directories(file_->parent_path());
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) continue;
    std::string raw = line.substr(0, tab), tok = line.substr(tab + 1);
    reverse_[tok] = raw;
    forward_[std::move(raw)] = std::move(tok);
  }
  if (!fs::exists(*file_)) std::ofstream(*file_).flush();
  restrict_permissions(*file_);
}

std::string PseudonymTable::token(const std::string& raw) {
  std::lock_guard lock(mu_);
  if (auto it = forward_.find(raw); it != forward_.end()) return it->second;
  std::string tok;
  do {
    tok = to_hex(rng_.bytes(16));
  } while (reverse_.contains(tok));
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    out << raw << '\t' << tok << '\n';
    if (!out.flush()) throw Error("cannot persist pseudonym table " + file_->string());
  }
  reverse_[tok] = raw;
  forward_[raw] = tok;
  return tok;
}

std::optional<std::string> PseudonymTable::lookup(const std::string& raw) const {
  std::lock_guard lock(mu_);
  auto it = forward_.find(raw);
  if (it == forward_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> PseudonymTable::raw_of(const std::string& token) const {
  std::lock_guard lock(mu_);
  auto it = reverse_.find(token);
  if (it == reverse_.end()) return std::nullopt;
  return it->second;
}

std::size_t PseudonymTable::size() const {
  std::lock_guard lock(mu_);
  return forward_.size();
}

Blacklist::Blacklist(std::optional<fs::path> file) : file_(std::move(file)) {
  if (!file_) return;
  if (file_->has_parent_path()) fs::create_directories(file_->parent_path());
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    Entry e;
    std::string path;
    if (!(fields >> e.endpoint)) continue;
    if (fields >> path) e.path = lwm2m::Path::parse(path);
    entries_.insert(std::move(e));
  }
}

void Blacklist::save_locked() const {
  if (!file_) return;
  const fs::path tmp = file_->string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& e : entries_) out << e.endpoint << (e.path ? " " + e.path->to_string() : "") << '\n';
    if (!out.flush()) throw Error("cannot write blacklist " + tmp.string());
  }
  restrict_permissions(tmp);
  fs::rename(tmp, *file_);
}

bool Blacklist::add(const Entry& e) {
  if (e.endpoint.empty() || e.endpoint.find_first_of(" \t\n") != std::string::npos)
    throw Error("blacklist endpoint must be a non-empty name without spaces");
  std::vector<Listener> listeners;
  {
    std::lock_guard lock(mu_);
    if (!entries_.insert(e).second) return false;
    save_locked();
    listeners = listeners_;
  }
  for (const auto& l : listeners) l(e, true);
  return true;
}

bool Blacklist::remove(const Entry& e) {
  std::vector<Listener> listeners;
  {
    std::lock_guard lock(mu_);
    if (!entries_.erase(e)) return false;
    save_locked();
    listeners = listeners_;
  }
  for (const auto& l : listeners) l(e, false);
  return true;
}

bool Blacklist::blocks(const std::string& endpoint, const lwm2m::Path& path) const {
  std::lock_guard lock(mu_);
  for (auto it = entries_.lower_bound(Entry{endpoint, std::nullopt}); it != entries_.end() && it->endpoint == endpoint;
       ++it)
    if (!it->path || it->path->covers(path)) return true;
  return false;
}

std::vector<Blacklist::Entry> Blacklist::entries() const {
  std::lock_guard lock(mu_);
  return {entries_.begin(), entries_.end()};
}

void Blacklist::on_change(Listener l) {
  std::lock_guard lock(mu_);
  listeners_.push_back(std::move(l));
}

}  // namespace makesense::collector
