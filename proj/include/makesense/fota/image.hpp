#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "makesense/common/bytes.hpp"
#include "makesense/common/error.hpp"

namespace makesense::fota {

MAKESENSE_DEFINE_ERROR(FotaError, Error);
MAKESENSE_DEFINE_ERROR(BadMagic, FotaError);
MAKESENSE_DEFINE_ERROR(CrcMismatch, FotaError);
MAKESENSE_DEFINE_ERROR(Truncated, FotaError);

inline constexpr std::uint8_t kMagic[4] = {0x45, 0x47, 0x47, 0x21};  // "EGG!"

/// Image layout: magic(4) | version length(1) | version | payload length(u32 BE) | crc32(u32 BE) | payload
struct ImageInfo {
  std::string version;
  std::uint32_t length = 0;
  std::uint32_t crc = 0;
  std::size_t header_size = 0;
};

bool valid_version(std::string_view v);

Bytes build_image(ByteView payload, const std::string& version);
/// Parses the header only; `bytes` may be a prefix of the image. Throws BadMagic or Truncated.
ImageInfo parse_header(ByteView bytes);
/// Full check of magic, length and CRC. Returns the header on success.
ImageInfo verify_image(ByteView bytes);

/// Directory of images named "<version>.img".
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path dir);

  /// Verifies and stores the image; returns its version.
  std::string put(ByteView image);
  /// Raw stored bytes, unverified.
  std::optional<Bytes> get(const std::string& version) const;
  std::vector<std::string> versions() const;
  std::filesystem::path path_of(const std::string& version) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace makesense::fota
