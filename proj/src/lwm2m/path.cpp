#include "makesense/lwm2m/path.hpp"

#include <charconv>

#include "makesense/lwm2m/catalog.hpp"

namespace makesense::lwm2m {
namespace {

bool parse_segment(std::string_view s, int& out) {
  if (s.empty() || s.size() > 5) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && out >= 0 && out <= 65535;
}

}  // namespace

Path Path::parse(std::string_view text) {
  if (text.empty() || text.front() != '/') throw BadPath("path must start with '/': " + std::string(text));
  text.remove_prefix(1);
  int parts[3];
  int n = 0;
  while (true) {
    const auto slash = text.find('/');
    const std::string_view seg = text.substr(0, slash);
    if (n == 3 || !parse_segment(seg, parts[n])) throw BadPath("bad path segment in '" + std::string(text) + "'");
    ++n;
    if (slash == std::string_view::npos) break;
    text.remove_prefix(slash + 1);
  }
  Path p(parts[0]);
  if (n > 1) p.instance = parts[1];
  if (n > 2) p.resource = parts[2];
  return p;
}

std::string Path::to_string() const {
  std::string s = "/" + std::to_string(object);
  if (instance) {
    s += "/" + std::to_string(*instance);
    if (resource) s += "/" + std::to_string(*resource);
  }
  return s;
}

bool Path::covers(const Path& other) const {
  if (object != other.object) return false;
  if (!instance) return true;
  if (instance != other.instance) return false;
  return !resource || resource == other.resource;
}

std::vector<Path> parse_links(std::string_view text) {
  std::vector<Path> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    std::string_view link = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    const auto semi = link.find(';');
    link = link.substr(0, semi);
    if (link.size() < 3 || link.front() != '<' || link.back() != '>')
      throw BadLinkFormat("malformed link '" + std::string(link) + "'");
    Path p;
    try {
      p = Path::parse(link.substr(1, link.size() - 2));
    } catch (const BadPath& e) {
      throw BadLinkFormat(e.what());
    }
    if (!p.instance || p.resource) throw BadLinkFormat("link must be /object/instance: " + std::string(link));
    out.push_back(p);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string format_links(const std::vector<Path>& links) {
  std::string s;
  for (const auto& p : links) {
    if (!s.empty()) s += ',';
    s += '<' + p.to_string() + '>';
  }
  return s;
}

void check_known_objects(const std::vector<Path>& links) {
  for (const auto& p : links)
    if (!find_object(p.object)) throw UnknownObject("object " + std::to_string(p.object) + " is not in the catalog");
}

}  // namespace makesense::lwm2m
