#include <charconv>

#include "makesense/common/error.hpp"
#include "makesense/net/transport.hpp"

namespace makesense::net {

std::string Address::to_string() const { return host + ":" + std::to_string(port); }

Address Address::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw Error("address must be host:port: " + std::string(text));
  unsigned port = 0;
  const auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || port > 65535)
    throw Error("invalid port in address: " + std::string(text));
  return Address{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

}  // namespace makesense::net
