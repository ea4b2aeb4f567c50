#pragma once

#include <functional>
#include <string>

#include "makesense/fota/image.hpp"
#include "makesense/lwm2m/client.hpp"

namespace makesense::fota {

enum class UpdateState { Idle = 0, Downloading = 1, Downloaded = 2, Updating = 3 };
enum class UpdateResult { None = 0, Success = 1, ConnectionLost = 4, IntegrityFailure = 5 };

const char* to_string(UpdateState s);
const char* to_string(UpdateResult r);

inline constexpr std::size_t kChunkSize = 512;

/// Device side of the firmware object (/5/0). Writing a package URI of the
/// form "/fw/<version>" starts a chunked download from the server; executing
/// /5/0/2 hands the verified image to the installer, which stands in for the
/// secondary boot loader and reboots the device.
class Updater {
 public:
  /// Installs the image and reboots. Returns false if the boot loader rejects it.
  using Installer = std::function<bool(ByteView image)>;

  Updater(Scheduler& scheduler, lwm2m::Client& client, lwm2m::ObjectModel& model, Installer installer);

  UpdateState state() const { return state_; }
  UpdateResult result() const { return result_; }
  std::size_t downloaded_bytes() const { return buffer_.size(); }

  /// The device lost power. Partial downloads do not survive.
  void power_loss();

 private:
  void set_state(UpdateState s);
  void set_result(UpdateResult r);
  void fail(UpdateResult r);
  void begin_download(const std::string& uri);
  void fetch_next();
  void on_chunk(const coap::Outcome& o);
  void update();

  Scheduler& scheduler_;
  lwm2m::Client& client_;
  lwm2m::ObjectModel& model_;
  Installer installer_;
  UpdateState state_ = UpdateState::Idle;
  UpdateResult result_ = UpdateResult::None;
  std::string uri_;
  Bytes buffer_;
  std::size_t expected_ = 0;
  std::uint64_t generation_ = 0;
};

}  // namespace makesense::fota
