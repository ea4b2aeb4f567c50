#include "makesense/fota/updater.hpp"

#include "makesense/lwm2m/catalog.hpp"

namespace makesense::fota {

using lwm2m::Path;
namespace fw = lwm2m::firmware;

const char* to_string(UpdateState s) {
  switch (s) {
    case UpdateState::Idle: return "IDLE";
    case UpdateState::Downloading: return "DOWNLOADING";
    case UpdateState::Downloaded: return "DOWNLOADED";
    case UpdateState::Updating: return "UPDATING";
  }
  return "?";
}

const char* to_string(UpdateResult r) {
  switch (r) {
    case UpdateResult::None: return "NONE";
    case UpdateResult::Success: return "SUCCESS";
    case UpdateResult::ConnectionLost: return "CONNECTION_LOST";
    case UpdateResult::IntegrityFailure: return "INTEGRITY_FAILURE";
  }
  return "?";
}

namespace {
const Path kUri(lwm2m::kFirmwareObject, 0, fw::kPackageUri);
const Path kUpdate(lwm2m::kFirmwareObject, 0, fw::kUpdate);
const Path kState(lwm2m::kFirmwareObject, 0, fw::kState);
const Path kResult(lwm2m::kFirmwareObject, 0, fw::kResult);
}  // namespace

Updater::Updater(Scheduler& scheduler, lwm2m::Client& client, lwm2m::ObjectModel& model, Installer installer)
    : scheduler_(scheduler), client_(client), model_(model), installer_(std::move(installer)) {
  model_.define(kUri, std::string(), lwm2m::kRead | lwm2m::kWrite);
  model_.define(kUpdate, 0.0, lwm2m::kExecute);
  model_.define(kState, 0.0, lwm2m::kRead);
  model_.define(kResult, 0.0, lwm2m::kRead);
  model_.on_write(kUri, [this](const lwm2m::Value& v) {
    const std::string uri = lwm2m::value_to_string(v);
    if (uri.empty()) {
      // Empty URI cancels whatever is in progress.
      ++generation_;
      buffer_.clear();
      set_state(UpdateState::Idle);
      set_result(UpdateResult::None);
      return;
    }
    if (state_ != UpdateState::Idle) {
      model_.set(kUri, uri_);
      throw lwm2m::Lwm2mError("update already in progress");
    }
    begin_download(uri);
  });
  model_.on_execute(kUpdate, [this](const std::string&) {
    if (state_ != UpdateState::Downloaded) throw lwm2m::Lwm2mError("no verified image to install");
    set_state(UpdateState::Updating);
    // Let the 2.04 go out before the reboot.
    const auto gen = generation_;
    scheduler_.after(milliseconds(50), [this, gen] {
      if (gen == generation_) update();
    });
  });
}

void Updater::set_state(UpdateState s) {
  state_ = s;
  model_.set(kState, static_cast<double>(s));
}

void Updater::set_result(UpdateResult r) {
  result_ = r;
  model_.set(kResult, static_cast<double>(r));
}

void Updater::fail(UpdateResult r) {
  ++generation_;
  buffer_.clear();
  expected_ = 0;
  set_state(UpdateState::Idle);
  set_result(r);
}

void Updater::power_loss() {
  ++generation_;
  if (state_ != UpdateState::Idle) fail(UpdateResult::ConnectionLost);
}

void Updater::begin_download(const std::string& uri) {
  if (!uri.starts_with("/fw/")) throw lwm2m::Lwm2mError("unsupported package uri " + uri);
  uri_ = uri;
  ++generation_;
  buffer_.clear();
  expected_ = 0;
  set_result(UpdateResult::None);
  set_state(UpdateState::Downloading);
  const auto gen = generation_;
  scheduler_.post([this, gen] {
    if (gen == generation_) fetch_next();
  });
}

void Updater::fetch_next() {
  coap::Message m;
  m.code = coap::codes::kGet;
  m.set_uri_path(uri_);
  m.add_query("offset", std::to_string(buffer_.size()));
  m.add_query("length", std::to_string(kChunkSize));
  const auto gen = generation_;
  client_.request(std::move(m), [this, gen](const coap::Outcome& o) {
    if (gen == generation_) on_chunk(o);
  });
}

void Updater::on_chunk(const coap::Outcome& o) {
  if (!coap::succeeded(o) || std::get<coap::Message>(o).code != coap::codes::kContent) {
    fail(UpdateResult::ConnectionLost);
    return;
  }
  const auto& chunk = std::get<coap::Message>(o).payload;
  if (chunk.empty()) {
    fail(buffer_.empty() ? UpdateResult::ConnectionLost : UpdateResult::IntegrityFailure);
    return;
  }
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  if (expected_ == 0) {
    try {
      const auto info = parse_header(buffer_);
      expected_ = info.header_size + info.length;
    } catch (const Truncated&) {
      fetch_next();
      return;
    } catch (const FotaError&) {
      fail(UpdateResult::IntegrityFailure);
      return;
    }
  }
  if (buffer_.size() < expected_) {
    fetch_next();
    return;
  }
  try {
    verify_image(buffer_);
  } catch (const FotaError&) {
    fail(UpdateResult::IntegrityFailure);
    return;
  }
  set_state(UpdateState::Downloaded);
}

void Updater::update() {
  Bytes image;
  image.swap(buffer_);
  expected_ = 0;
  ++generation_;
  set_state(UpdateState::Idle);
  const bool ok = installer_(image);
  set_result(ok ? UpdateResult::Success : UpdateResult::IntegrityFailure);
}

}  // namespace makesense::fota
