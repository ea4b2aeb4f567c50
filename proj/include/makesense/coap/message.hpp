#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "makesense/common/bytes.hpp"
#include "makesense/common/error.hpp"

namespace makesense::coap {

MAKESENSE_DEFINE_ERROR(InvalidMessage, Error);
MAKESENSE_DEFINE_ERROR(MalformedPdu, Error);

enum class Type : std::uint8_t { Con = 0, Non = 1, Ack = 2, Rst = 3 };

/// Method or response code, "c.dd" on the wire as 3-bit class / 5-bit detail.
struct Code {
  std::uint8_t raw = 0;

  constexpr Code() = default;
  constexpr Code(std::uint8_t cls, std::uint8_t detail) : raw(static_cast<std::uint8_t>(cls << 5 | (detail & 0x1F))) {}
  static constexpr Code from_raw(std::uint8_t raw) {
    Code c;
    c.raw = raw;
    return c;
  }

  constexpr std::uint8_t cls() const { return raw >> 5; }
  constexpr std::uint8_t detail() const { return raw & 0x1F; }
  constexpr bool empty() const { return raw == 0; }
  constexpr bool is_request() const { return cls() == 0 && raw != 0; }
  constexpr bool is_response() const { return cls() >= 2; }
  constexpr bool is_success() const { return cls() == 2; }
  std::string to_string() const;

  constexpr auto operator<=>(const Code&) const = default;
};

namespace codes {
inline constexpr Code kEmpty{0, 0};
inline constexpr Code kGet{0, 1};
inline constexpr Code kPost{0, 2};
inline constexpr Code kPut{0, 3};
inline constexpr Code kDelete{0, 4};
inline constexpr Code kCreated{2, 1};
inline constexpr Code kDeleted{2, 2};
inline constexpr Code kChanged{2, 4};
inline constexpr Code kContent{2, 5};
inline constexpr Code kBadRequest{4, 0};
inline constexpr Code kUnauthorized{4, 1};
inline constexpr Code kNotFound{4, 4};
inline constexpr Code kMethodNotAllowed{4, 5};
inline constexpr Code kInternalError{5, 0};
}  // namespace codes

/// The option numbers this implementation understands.
enum class OptionNumber : std::uint16_t { Observe = 6, UriPath = 11, ContentFormat = 12, UriQuery = 15 };

bool is_supported_option(std::uint16_t number);

inline constexpr std::uint16_t kContentFormatJson = 50;
inline constexpr std::size_t kMaxTokenLength = 8;
inline constexpr std::size_t kMaxFieldLength = 64 * 1024;

struct Option {
  std::uint16_t number = 0;
  Bytes value;

  bool operator==(const Option&) const = default;
};

struct Message {
  Type type = Type::Con;
  Code code;
  std::uint16_t message_id = 0;
  Bytes token;
  std::vector<Option> options;  // ascending by number
  Bytes payload;

  bool operator==(const Message&) const = default;

  /// Inserts after any existing options with the same number.
  void add_option(OptionNumber number, Bytes value);
  void add_uint_option(OptionNumber number, std::uint32_t value);
  void remove_options(OptionNumber number);
  std::vector<const Option*> find_all(OptionNumber number) const;
  std::optional<std::uint32_t> uint_option(OptionNumber number) const;

  /// "/3303/0/5700" from the Uri-Path segments ("/" if none).
  std::string uri_path() const;
  void set_uri_path(std::string_view path);
  void add_query(std::string_view key, std::string_view value);
  std::optional<std::string> query(std::string_view key) const;

  std::optional<std::uint32_t> observe() const { return uint_option(OptionNumber::Observe); }
  void set_observe(std::uint32_t value);

  std::string payload_string() const { return to_string(payload); }
  void set_payload(std::string_view text) { payload = to_bytes(text); }
};

/// Wire encoding: 4-byte header, token, delta-encoded options, 0xFF + payload.
Bytes encode(const Message& msg);

/// Total over arbitrary input: returns a Message or throws MalformedPdu.
Message decode(ByteView bytes);

std::uint32_t decode_uint(ByteView value);
Bytes encode_uint(std::uint32_t value);

}  // namespace makesense::coap
