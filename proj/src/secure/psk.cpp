#include "makesense/secure/psk.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace makesense::secure {

namespace {

constexpr std::string_view kClientLabel = "client hello";
constexpr std::string_view kServerLabel = "server hello";
constexpr std::string_view kKeyLabel = "makesense psk keys v1";

void append(Bytes& out, ByteView b) { out.insert(out.end(), b.begin(), b.end()); }
void append(Bytes& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

bool equal_ct(ByteView a, ByteView b) { return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0; }

Mac32 client_mac(const Key128& psk, const Random32& random, const std::string& psk_id) {
  Bytes msg;
  append(msg, kClientLabel);
  append(msg, random);
  append(msg, psk_id);
  return hmac_sha256(psk, msg);
}

Mac32 server_mac(const Key128& psk, const Random32& client_random, const std::string& psk_id,
                 const Random32& server_random, const SessionId& session_id) {
  Bytes msg;
  append(msg, kServerLabel);
  append(msg, client_random);
  append(msg, psk_id);
  append(msg, server_random);
  append(msg, session_id);
  return hmac_sha256(psk, msg);
}

}  // namespace

PskIdentity PskIdentity::make(std::string id, ByteView key) {
  if (id.empty() || id.size() > kMaxPskIdLength) throw Error("psk_id must be 1..64 characters");
  if (!std::all_of(id.begin(), id.end(), [](unsigned char c) { return c >= 0x21 && c <= 0x7E; }))
    throw Error("psk_id must be printable without spaces");
  if (key.size() != 16) throw Error("psk_key must be exactly 16 bytes");
  PskIdentity out;
  out.id = std::move(id);
  std::copy(key.begin(), key.end(), out.key.begin());
  return out;
}

void KeyStore::add(const PskIdentity& identity) {
  std::lock_guard lock(mu_);
  keys_[identity.id] = identity.key;
}

std::optional<Key128> KeyStore::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = keys_.find(id);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

std::size_t KeyStore::size() const {
  std::lock_guard lock(mu_);
  return keys_.size();
}

void KeyStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open key table " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string id, hex;
    if (!(fields >> id)) continue;
    if (!(fields >> hex)) throw Error(path + ":" + std::to_string(line_no) + ": missing key");
    add(PskIdentity::make(id, from_hex(hex)));
  }
}

void KeyStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write key table " + path);
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, key] : keys_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) out << id << ' ' << to_hex(keys_.at(id)) << '\n';
}

Mac32 hmac_sha256(ByteView key, ByteView data) {
  Mac32 out{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(), out.data(), &len);
  return out;
}

Bytes hkdf_sha256(ByteView salt, ByteView ikm, ByteView info, std::size_t length) {
  if (length > 255 * 32) throw Error("hkdf output too long");
  const Mac32 prk = hmac_sha256(salt, ikm);
  Bytes okm;
  Bytes block;
  for (std::uint8_t counter = 1; okm.size() < length; ++counter) {
    Bytes input = block;
    append(input, info);
    input.push_back(counter);
    const Mac32 t = hmac_sha256(prk, input);
    block.assign(t.begin(), t.end());
    append(okm, block);
  }
  okm.resize(length);
  return okm;
}

DirectionalKeys derive_keys(const Key128& psk, const Random32& client_random, const Random32& server_random,
                            const SessionId& session_id) {
  Bytes salt;
  append(salt, client_random);
  append(salt, server_random);
  Bytes info;
  append(info, kKeyLabel);
  append(info, session_id);
  const Bytes okm = hkdf_sha256(salt, psk, info, 16 + 16 + 12 + 12);
  DirectionalKeys k;
  auto it = okm.begin();
  std::copy_n(it, 16, k.client_to_server.begin());
  std::copy_n(it + 16, 16, k.server_to_client.begin());
  std::copy_n(it + 32, 12, k.client_iv.begin());
  std::copy_n(it + 44, 12, k.server_iv.begin());
  return k;
}

bool ReplayWindow::acceptable(std::uint64_t seq) const {
  if (!any_ || seq > highest_) return true;
  const std::uint64_t offset = highest_ - seq;
  if (offset >= kWidth) return false;
  return !(bitmap_ & (1ULL << offset));
}

void ReplayWindow::mark(std::uint64_t seq) {
  if (!any_) {
    any_ = true;
    highest_ = seq;
    bitmap_ = 1;
    return;
  }
  if (seq > highest_) {
    const std::uint64_t shift = seq - highest_;
    bitmap_ = shift >= kWidth ? 0 : bitmap_ << shift;
    bitmap_ |= 1;
    highest_ = seq;
    return;
  }
  const std::uint64_t offset = highest_ - seq;
  if (offset < kWidth) bitmap_ |= 1ULL << offset;
}

struct SecureSession::Cipher {
  EVP_CIPHER_CTX* seal = EVP_CIPHER_CTX_new();
  EVP_CIPHER_CTX* open = EVP_CIPHER_CTX_new();
  ~Cipher() {
    EVP_CIPHER_CTX_free(seal);
    EVP_CIPHER_CTX_free(open);
  }
};

SecureSession::SecureSession(Role role, SessionId id, const DirectionalKeys& keys)
    : role_(role), id_(id), keys_(keys), cipher_(std::make_unique<Cipher>()), recv_mu_(std::make_unique<std::mutex>()) {
  const Key128& send_key = role == Role::Client ? keys_.client_to_server : keys_.server_to_client;
  const Key128& recv_key = role == Role::Client ? keys_.server_to_client : keys_.client_to_server;
  if (EVP_EncryptInit_ex(cipher_->seal, EVP_aes_128_gcm(), nullptr, send_key.data(), nullptr) != 1 ||
      EVP_DecryptInit_ex(cipher_->open, EVP_aes_128_gcm(), nullptr, recv_key.data(), nullptr) != 1)
    throw SecurityError("AES-128-GCM initialisation failed");
}

SecureSession::~SecureSession() = default;
SecureSession::SecureSession(SecureSession&&) noexcept = default;
SecureSession& SecureSession::operator=(SecureSession&&) noexcept = default;

void SecureSession::skip_send_sequence_to(std::uint64_t seq) {
  if (seq < send_seq_) throw Error("sequence numbers only move forward");
  send_seq_ = seq;
}

namespace {

std::array<std::uint8_t, 12> make_nonce(const std::array<std::uint8_t, 12>& iv, std::uint64_t seq) {
  auto nonce = iv;
  for (int i = 0; i < 6; ++i) nonce[11 - i] ^= static_cast<std::uint8_t>(seq >> (8 * i));
  return nonce;
}

}  // namespace

Bytes SecureSession::seal(ByteView plaintext) {
  if (send_seq_ > kMaxSequence) throw SequenceExhausted("48-bit record sequence exhausted");
  const std::uint64_t seq = send_seq_++;
  Bytes record;
  record.reserve(kRecordHeaderSize + plaintext.size() + kTagSize);
  append(record, id_);
  for (int shift = 40; shift >= 0; shift -= 8) record.push_back(static_cast<std::uint8_t>(seq >> shift));
  const auto nonce = make_nonce(role_ == Role::Client ? keys_.client_iv : keys_.server_iv, seq);

  EVP_CIPHER_CTX* ctx = cipher_->seal;
  int len = 0;
  record.resize(kRecordHeaderSize + plaintext.size() + kTagSize);
  if (EVP_EncryptInit_ex(ctx, nullptr, nullptr, nullptr, nonce.data()) != 1 ||
      EVP_EncryptUpdate(ctx, nullptr, &len, record.data(), kRecordHeaderSize) != 1 ||
      EVP_EncryptUpdate(ctx, record.data() + kRecordHeaderSize, &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx, record.data() + kRecordHeaderSize + len, &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTagSize, record.data() + kRecordHeaderSize + plaintext.size()) != 1)
    throw SecurityError("AES-128-GCM seal failed");
  return record;
}

std::optional<SessionId> SecureSession::peek_session_id(ByteView record) {
  if (record.size() < kRecordHeaderSize + kTagSize) return std::nullopt;
  SessionId id;
  std::copy_n(record.begin(), id.size(), id.begin());
  return id;
}

std::uint64_t SecureSession::peek_sequence(ByteView record) { return get_be(record, 8, 6); }

Bytes SecureSession::open(ByteView record) {
  if (record.size() < kRecordHeaderSize + kTagSize) throw IntegrityError("record too short");
  if (!std::equal(id_.begin(), id_.end(), record.begin())) throw UnknownSession("record for a different session");
  const std::uint64_t seq = peek_sequence(record);

  std::lock_guard lock(*recv_mu_);
  if (!window_.acceptable(seq)) throw ReplayError("sequence " + std::to_string(seq) + " replayed or too old");

  const auto nonce = make_nonce(role_ == Role::Client ? keys_.server_iv : keys_.client_iv, seq);
  const std::size_t body = record.size() - kRecordHeaderSize - kTagSize;
  Bytes plaintext(body);
  std::array<std::uint8_t, kTagSize> tag;
  std::copy_n(record.end() - kTagSize, kTagSize, tag.begin());
  EVP_CIPHER_CTX* ctx = cipher_->open;
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx, nullptr, nullptr, nullptr, nonce.data()) == 1 &&
            EVP_DecryptUpdate(ctx, nullptr, &len, record.data(), kRecordHeaderSize) == 1 &&
            EVP_DecryptUpdate(ctx, plaintext.data(), &len, record.data() + kRecordHeaderSize, static_cast<int>(body)) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()) == 1;
  int final_len = 0;
  ok = ok && EVP_DecryptFinal_ex(ctx, plaintext.data() + len, &final_len) == 1;
  if (!ok) throw IntegrityError("record authentication failed");
  window_.mark(seq);
  return plaintext;
}

Bytes ClientHello::encode() const {
  Bytes out;
  append(out, random);
  out.push_back(static_cast<std::uint8_t>(psk_id.size()));
  append(out, psk_id);
  append(out, mac);
  return out;
}

ClientHello ClientHello::decode(ByteView bytes) {
  if (bytes.size() < 33) throw SecurityError("short ClientHello");
  ClientHello h;
  std::copy_n(bytes.begin(), 32, h.random.begin());
  const std::size_t id_len = bytes[32];
  if (id_len == 0 || id_len > kMaxPskIdLength || bytes.size() != 33 + id_len + 32)
    throw SecurityError("malformed ClientHello");
  h.psk_id.assign(bytes.begin() + 33, bytes.begin() + 33 + static_cast<std::ptrdiff_t>(id_len));
  std::copy_n(bytes.begin() + 33 + static_cast<std::ptrdiff_t>(id_len), 32, h.mac.begin());
  return h;
}

Bytes ServerHello::encode() const {
  Bytes out;
  append(out, random);
  append(out, session_id);
  append(out, mac);
  return out;
}

ServerHello ServerHello::decode(ByteView bytes) {
  if (bytes.size() != 32 + 8 + 32) throw SecurityError("malformed ServerHello");
  ServerHello h;
  std::copy_n(bytes.begin(), 32, h.random.begin());
  std::copy_n(bytes.begin() + 32, 8, h.session_id.begin());
  std::copy_n(bytes.begin() + 40, 32, h.mac.begin());
  return h;
}

ClientHello make_client_hello(const Random32& client_random, const PskIdentity& identity) {
  ClientHello h;
  h.random = client_random;
  h.psk_id = identity.id;
  h.mac = client_mac(identity.key, client_random, identity.id);
  return h;
}

ServerAccept accept_client_hello(const ClientHello& hello, const KeyStore& keys, const Random32& server_random,
                                 const SessionId& session_id) {
  const auto psk = keys.find(hello.psk_id);
  if (!psk) throw UnknownPskId("unknown psk_id " + hello.psk_id);
  if (!equal_ct(client_mac(*psk, hello.random, hello.psk_id), hello.mac))
    throw AuthFailure("ClientHello MAC does not verify for " + hello.psk_id);
  ServerHello reply;
  reply.random = server_random;
  reply.session_id = session_id;
  reply.mac = server_mac(*psk, hello.random, hello.psk_id, server_random, session_id);
  return ServerAccept{reply, SecureSession(SecureSession::Role::Server, session_id,
                                           derive_keys(*psk, hello.random, server_random, session_id))};
}

SecureSession finish_handshake(const ClientHello& sent, const PskIdentity& identity, const ServerHello& reply) {
  const Mac32 expected = server_mac(identity.key, sent.random, identity.id, reply.random, reply.session_id);
  if (!equal_ct(expected, reply.mac)) throw AuthFailure("ServerHello MAC does not verify");
  return SecureSession(SecureSession::Role::Client, reply.session_id,
                       derive_keys(identity.key, sent.random, reply.random, reply.session_id));
}

}  // namespace makesense::secure
