#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "makesense/fota/image.hpp"
#include "makesense/fota/updater.hpp"
#include "makesense/lwm2m/server.hpp"

namespace makesense::fota {

enum class PushOutcome { Pending, Success, IntegrityFailure, ConnectionLost, Timeout, NotRegistered };

const char* to_string(PushOutcome o);

struct PushResult {
  std::string endpoint;
  std::string version;
  std::string previous_version;
  PushOutcome outcome = PushOutcome::Pending;
  TimePoint started;
  TimePoint finished;
};

/// Server side of firmware updates: serves image chunks under /fw/<version>
/// and drives each target's firmware object through download, verification,
/// install and re-registration.
class FotaService {
 public:
  struct Options {
    Duration poll_interval{1000};
    Duration timeout{600000};
  };
  using Done = std::function<void(const std::vector<PushResult>&)>;

  FotaService(Scheduler& scheduler, lwm2m::Server& server, ImageStore& images, Options options);
  FotaService(Scheduler& scheduler, lwm2m::Server& server, ImageStore& images)
      : FotaService(scheduler, server, images, Options{}) {}
  ~FotaService();

  /// Starts one update session per target. Throws FotaError if the version is not in the store.
  void push(const std::vector<std::string>& targets, const std::string& version, Done done = {});

  std::vector<PushResult> results() const;
  std::size_t active() const;

 private:
  struct Session;
  struct Batch;

  coap::Message serve_chunk(const coap::Message& req);
  void poll(const std::shared_ptr<Session>& s);
  void finish(const std::shared_ptr<Session>& s, PushOutcome outcome);

  Scheduler& scheduler_;
  lwm2m::Server& server_;
  ImageStore& images_;
  Options options_;
  std::shared_ptr<bool> alive_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Bytes>> served_;  // version -> bytes
  std::vector<std::shared_ptr<Session>> sessions_;
  std::vector<PushResult> results_;
};

}  // namespace makesense::fota
