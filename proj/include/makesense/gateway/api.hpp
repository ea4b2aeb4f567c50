#pragma once

#include <memory>
#include <string>

#include "makesense/gateway/testbed.hpp"

namespace makesense::gateway {

struct ApiOptions {
  std::string token;  // empty: no authentication
  std::string host = "127.0.0.1";
  int port = 8080;    // 0: any free port
  Duration request_timeout{15000};
};

/// JSON-over-HTTP API consumed by the dashboard. Handlers run on HTTP
/// threads and hop onto the testbed's scheduler for every state access, so
/// the scheduler must be running (Scheduler::run on some thread).
class ApiServer {
 public:
  ApiServer(Testbed& testbed, ApiOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the socket; returns the port.
  int bind();
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Prometheus text exposition of the testbed counters.
std::string render_metrics(Testbed& testbed);

}  // namespace makesense::gateway
