#include "makesense/fota/image.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace makesense::fota {

bool valid_version(std::string_view v) {
  if (v.empty() || v.size() > 64) return false;
  std::string_view core = v.substr(0, v.find('-'));
  int parts = 0;
  std::size_t digits = 0;
  for (char c : core) {
    if (c == '.') {
      if (digits == 0) return false;
      ++parts;
      digits = 0;
    } else if (c >= '0' && c <= '9') {
      ++digits;
    } else {
      return false;
    }
  }
  if (digits == 0 || parts != 2) return false;
  if (core.size() == v.size()) return true;
  std::string_view pre = v.substr(core.size() + 1);
  return !pre.empty() && std::all_of(pre.begin(), pre.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '.';
  });
}

Bytes build_image(ByteView payload, const std::string& version) {
  if (payload.empty()) throw FotaError("empty firmware payload");
  if (!valid_version(version)) throw FotaError("bad version '" + version + "'");
  if (payload.size() > 0xFFFFFFFFu) throw FotaError("payload too large");
  Bytes out(std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(version.size()));
  out.insert(out.end(), version.begin(), version.end());
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  put_u32(out, crc32(payload));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ImageInfo parse_header(ByteView b) {
  if (b.size() < 5) throw Truncated("image header truncated");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), b.begin())) throw BadMagic("bad image magic");
  ImageInfo info;
  const std::size_t vlen = b[4];
  info.header_size = 5 + vlen + 8;
  if (b.size() < info.header_size) throw Truncated("image header truncated");
  info.version.assign(b.begin() + 5, b.begin() + 5 + static_cast<std::ptrdiff_t>(vlen));
  info.length = static_cast<std::uint32_t>(get_be(b, 5 + vlen, 4));
  info.crc = static_cast<std::uint32_t>(get_be(b, 9 + vlen, 4));
  return info;
}

ImageInfo verify_image(ByteView b) {
  ImageInfo info = parse_header(b);
  if (b.size() < info.header_size + info.length) throw Truncated("image payload truncated");
  if (b.size() > info.header_size + info.length) throw FotaError("trailing bytes after image payload");
  if (crc32(b.subspan(info.header_size)) != info.crc) throw CrcMismatch("image crc mismatch");
  if (!valid_version(info.version)) throw FotaError("bad version in image");
  return info;
}

ImageStore::ImageStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

std::filesystem::path ImageStore::path_of(const std::string& version) const {
  if (!valid_version(version)) throw FotaError("bad version '" + version + "'");
  return dir_ / (version + ".img");
}

std::string ImageStore::put(ByteView image) {
  const auto info = verify_image(image);
  const auto target = path_of(info.version);
  const auto tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
    if (!out) throw FotaError("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, target);
  return info.version;
}

std::optional<Bytes> ImageStore::get(const std::string& version) const {
  if (!valid_version(version)) return std::nullopt;
  std::ifstream in(path_of(version), std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> ImageStore::versions() const {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    if (e.path().extension() != ".img") continue;
    out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace makesense::fota
