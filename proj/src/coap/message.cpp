#include "makesense/coap/message.hpp"

#include <algorithm>
#include <cstdio>

namespace makesense::coap {

std::string Code::to_string() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%u.%02u", cls(), detail());
  return buf;
}

bool is_supported_option(std::uint16_t number) {
  switch (static_cast<OptionNumber>(number)) {
    case OptionNumber::Observe:
    case OptionNumber::UriPath:
    case OptionNumber::ContentFormat:
    case OptionNumber::UriQuery:
      return true;
  }
  return false;
}

std::uint32_t decode_uint(ByteView value) {
  if (value.size() > 4) throw MalformedPdu("integer option longer than 4 bytes");
  return static_cast<std::uint32_t>(get_be(value, 0, value.size()));
}

Bytes encode_uint(std::uint32_t value) {
  Bytes out;
  for (int shift = 24; shift >= 0; shift -= 8) {
    const auto b = static_cast<std::uint8_t>(value >> shift);
    if (!out.empty() || b != 0) out.push_back(b);
  }
  return out;
}

void Message::add_option(OptionNumber number, Bytes value) {
  const auto n = static_cast<std::uint16_t>(number);
  auto pos = std::upper_bound(options.begin(), options.end(), n,
                              [](std::uint16_t v, const Option& o) { return v < o.number; });
  options.insert(pos, Option{n, std::move(value)});
}

void Message::add_uint_option(OptionNumber number, std::uint32_t value) { add_option(number, encode_uint(value)); }

void Message::remove_options(OptionNumber number) {
  std::erase_if(options, [n = static_cast<std::uint16_t>(number)](const Option& o) { return o.number == n; });
}

std::vector<const Option*> Message::find_all(OptionNumber number) const {
  std::vector<const Option*> out;
  for (const auto& o : options)
    if (o.number == static_cast<std::uint16_t>(number)) out.push_back(&o);
  return out;
}

std::optional<std::uint32_t> Message::uint_option(OptionNumber number) const {
  for (const auto& o : options)
    if (o.number == static_cast<std::uint16_t>(number)) return decode_uint(o.value);
  return std::nullopt;
}

std::string Message::uri_path() const {
  std::string out;
  for (const auto* o : find_all(OptionNumber::UriPath)) {
    out.push_back('/');
    out.append(o->value.begin(), o->value.end());
  }
  return out.empty() ? "/" : out;
}

void Message::set_uri_path(std::string_view path) {
  remove_options(OptionNumber::UriPath);
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto slash = path.find('/');
    const auto segment = path.substr(0, slash);
    add_option(OptionNumber::UriPath, to_bytes(segment));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash);
  }
}

void Message::add_query(std::string_view key, std::string_view value) {
  std::string q(key);
  q.push_back('=');
  q.append(value);
  add_option(OptionNumber::UriQuery, to_bytes(q));
}

std::optional<std::string> Message::query(std::string_view key) const {
  for (const auto* o : find_all(OptionNumber::UriQuery)) {
    std::string_view q(reinterpret_cast<const char*>(o->value.data()), o->value.size());
    if (q.size() > key.size() && q.starts_with(key) && q[key.size()] == '=') return std::string(q.substr(key.size() + 1));
    if (q == key) return std::string();
  }
  return std::nullopt;
}

void Message::set_observe(std::uint32_t value) {
  remove_options(OptionNumber::Observe);
  add_uint_option(OptionNumber::Observe, value & 0xFFFFFF);
}

namespace {

// Nibble + extension bytes for an option delta or length.
void put_extended(std::uint32_t v, std::uint8_t& nibble, Bytes& ext) {
  if (v < 13) {
    nibble = static_cast<std::uint8_t>(v);
  } else if (v < 269) {
    nibble = 13;
    ext.push_back(static_cast<std::uint8_t>(v - 13));
  } else {
    nibble = 14;
    put_u16(ext, static_cast<std::uint16_t>(v - 269));
  }
}

}  // namespace

Bytes encode(const Message& msg) {
  if (msg.token.size() > kMaxTokenLength) throw InvalidMessage("token longer than 8 bytes");
  if (msg.payload.size() > kMaxFieldLength) throw InvalidMessage("payload exceeds 64 KiB");
  Bytes out;
  out.reserve(4 + msg.token.size() + msg.payload.size() + 8 * msg.options.size() + 1);
  out.push_back(static_cast<std::uint8_t>(1 << 6 | static_cast<std::uint8_t>(msg.type) << 4 | msg.token.size()));
  out.push_back(msg.code.raw);
  put_u16(out, msg.message_id);
  out.insert(out.end(), msg.token.begin(), msg.token.end());

  std::uint16_t previous = 0;
  for (const auto& opt : msg.options) {
    if (!is_supported_option(opt.number)) throw InvalidMessage("unsupported option number " + std::to_string(opt.number));
    if (opt.number < previous) throw InvalidMessage("options not sorted by number");
    if (opt.value.size() > kMaxFieldLength - 1) throw InvalidMessage("option value too long");
    Bytes ext;
    std::uint8_t delta_nibble = 0;
    std::uint8_t length_nibble = 0;
    put_extended(opt.number - previous, delta_nibble, ext);
    put_extended(static_cast<std::uint32_t>(opt.value.size()), length_nibble, ext);
    out.push_back(static_cast<std::uint8_t>(delta_nibble << 4 | length_nibble));
    out.insert(out.end(), ext.begin(), ext.end());
    out.insert(out.end(), opt.value.begin(), opt.value.end());
    previous = opt.number;
  }
  if (!msg.payload.empty()) {
    out.push_back(0xFF);
    out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  }
  return out;
}

Message decode(ByteView bytes) {
  if (bytes.size() < 4) throw MalformedPdu("short header");
  const std::uint8_t first = bytes[0];
  if ((first >> 6) != 1) throw MalformedPdu("unsupported version");
  const std::size_t tkl = first & 0x0F;
  if (tkl > kMaxTokenLength) throw MalformedPdu("bad token length");
  if (bytes.size() < 4 + tkl) throw MalformedPdu("token overruns datagram");

  Message msg;
  msg.type = static_cast<Type>((first >> 4) & 0x3);
  msg.code = Code::from_raw(bytes[1]);
  msg.message_id = static_cast<std::uint16_t>(get_be(bytes, 2, 2));
  msg.token.assign(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(tkl));

  std::size_t pos = 4 + tkl;
  std::uint32_t number = 0;
  auto read_extended = [&](std::uint8_t nibble) -> std::uint32_t {
    if (nibble < 13) return nibble;
    if (nibble == 13) {
      if (pos + 1 > bytes.size()) throw MalformedPdu("option header overrun");
      return 13U + bytes[pos++];
    }
    if (nibble == 14) {
      if (pos + 2 > bytes.size()) throw MalformedPdu("option header overrun");
      const auto v = static_cast<std::uint32_t>(get_be(bytes, pos, 2));
      pos += 2;
      return 269U + v;
    }
    throw MalformedPdu("reserved option nibble");
  };

  while (pos < bytes.size()) {
    const std::uint8_t header = bytes[pos++];
    if (header == 0xFF) {
      if (pos == bytes.size()) throw MalformedPdu("payload marker without payload");
      msg.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
      if (msg.payload.size() > kMaxFieldLength) throw MalformedPdu("payload exceeds 64 KiB");
      return msg;
    }
    const std::uint32_t delta = read_extended(header >> 4);
    const std::uint32_t length = read_extended(header & 0x0F);
    if (length >= kMaxFieldLength) throw MalformedPdu("option length exceeds cap");
    number += delta;
    if (number > 0xFFFF || !is_supported_option(static_cast<std::uint16_t>(number)))
      throw MalformedPdu("unsupported option number " + std::to_string(number));
    if (pos + length > bytes.size()) throw MalformedPdu("option value overrun");
    msg.options.push_back(Option{static_cast<std::uint16_t>(number),
                                 Bytes(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + length))});
    pos += length;
  }
  return msg;
}

}  // namespace makesense::coap
