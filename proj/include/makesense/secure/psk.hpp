#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "makesense/common/bytes.hpp"
#include "makesense/common/error.hpp"

namespace makesense::secure {

MAKESENSE_DEFINE_ERROR(SecurityError, Error);
MAKESENSE_DEFINE_ERROR(UnknownPskId, SecurityError);
MAKESENSE_DEFINE_ERROR(AuthFailure, SecurityError);
MAKESENSE_DEFINE_ERROR(HandshakeTimeout, SecurityError);
MAKESENSE_DEFINE_ERROR(SequenceExhausted, SecurityError);
MAKESENSE_DEFINE_ERROR(IntegrityError, SecurityError);
MAKESENSE_DEFINE_ERROR(ReplayError, SecurityError);
MAKESENSE_DEFINE_ERROR(UnknownSession, SecurityError);

using Key128 = std::array<std::uint8_t, 16>;
using Random32 = std::array<std::uint8_t, 32>;
using Mac32 = std::array<std::uint8_t, 32>;
using SessionId = std::array<std::uint8_t, 8>;

inline constexpr std::size_t kMaxPskIdLength = 64;
inline constexpr std::size_t kRecordHeaderSize = 14;  // session id (8) + sequence (6)
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::uint64_t kMaxSequence = (1ULL << 48) - 1;

struct PskIdentity {
  std::string id;
  Key128 key{};

  /// Validates printable id of at most 64 chars.
  static PskIdentity make(std::string id, ByteView key);
};

/// Server-side psk_id -> key table. Thread-safe.
class KeyStore {
 public:
  void add(const PskIdentity& identity);
  std::optional<Key128> find(const std::string& id) const;
  std::size_t size() const;

  /// Adds lines of "<psk_id> <32 hex digits>"; '#' starts a comment.
  void load(const std::string& path);
  void save(const std::string& path) const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, Key128> keys_;
};

Mac32 hmac_sha256(ByteView key, ByteView data);
/// HMAC-based extract-and-expand (RFC 5869 construction over SHA-256).
Bytes hkdf_sha256(ByteView salt, ByteView ikm, ByteView info, std::size_t length);

struct DirectionalKeys {
  Key128 client_to_server{};
  Key128 server_to_client{};
  std::array<std::uint8_t, 12> client_iv{};
  std::array<std::uint8_t, 12> server_iv{};

  bool operator==(const DirectionalKeys&) const = default;
};

DirectionalKeys derive_keys(const Key128& psk, const Random32& client_random, const Random32& server_random,
                            const SessionId& session_id);

/// Sliding 64-wide anti-replay window over 48-bit sequence numbers.
class ReplayWindow {
 public:
  static constexpr std::uint64_t kWidth = 64;

  /// True if `seq` would be accepted (ahead of the window, or inside it and unseen).
  bool acceptable(std::uint64_t seq) const;
  void mark(std::uint64_t seq);
  std::optional<std::uint64_t> highest() const { return any_ ? std::optional(highest_) : std::nullopt; }

 private:
  bool any_ = false;
  std::uint64_t highest_ = 0;
  std::uint64_t bitmap_ = 0;  // bit i set => (highest_ - i) seen
};

/// One established PSK session: AES-128-GCM records with a per-direction key,
/// nonce = iv XOR sequence, and the 14-byte record header as AAD.
class SecureSession {
 public:
  enum class Role { Client, Server };

  SecureSession(Role role, SessionId id, const DirectionalKeys& keys);
  ~SecureSession();
  SecureSession(SecureSession&&) noexcept;
  SecureSession& operator=(SecureSession&&) noexcept;

  const SessionId& id() const { return id_; }
  Role role() const { return role_; }
  const DirectionalKeys& keys() const { return keys_; }
  std::uint64_t next_send_sequence() const { return send_seq_; }

  /// record = session_id || seq (6 bytes BE) || ciphertext || tag.
  Bytes seal(ByteView plaintext);
  /// Verifies session id, tag and replay window. Throws UnknownSession,
  /// IntegrityError or ReplayError; on success the sequence is consumed.
  Bytes open(ByteView record);

  /// Jumps the send counter forward (resuming persisted state).
  void skip_send_sequence_to(std::uint64_t seq);

  static std::optional<SessionId> peek_session_id(ByteView record);
  static std::uint64_t peek_sequence(ByteView record);

 private:
  struct Cipher;

  Role role_;
  SessionId id_;
  DirectionalKeys keys_;
  std::uint64_t send_seq_ = 0;
  std::unique_ptr<Cipher> cipher_;
  std::unique_ptr<std::mutex> recv_mu_;
  ReplayWindow window_;
};

// -- Handshake ---------------------------------------------------------------

struct ClientHello {
  Random32 random{};
  std::string psk_id;
  Mac32 mac{};  // HMAC(psk, "client hello" || random || psk_id)

  Bytes encode() const;
  static ClientHello decode(ByteView bytes);  // throws SecurityError
};

struct ServerHello {
  Random32 random{};
  SessionId session_id{};
  Mac32 mac{};  // HMAC(psk, "server hello" || client random || psk_id || server random || session id)

  Bytes encode() const;
  static ServerHello decode(ByteView bytes);
};

ClientHello make_client_hello(const Random32& client_random, const PskIdentity& identity);

struct ServerAccept {
  ServerHello hello;
  SecureSession session;
};

/// Server side. Throws UnknownPskId or AuthFailure; no session exists on failure.
ServerAccept accept_client_hello(const ClientHello& hello, const KeyStore& keys, const Random32& server_random,
                                 const SessionId& session_id);

/// Client side. Throws AuthFailure if the server's transcript MAC does not verify.
SecureSession finish_handshake(const ClientHello& sent, const PskIdentity& identity, const ServerHello& reply);

}  // namespace makesense::secure
