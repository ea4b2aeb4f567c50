#include "makesense/gateway/api.hpp"

#include <condition_variable>
#include <deque>
#include <future>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "makesense/lwm2m/object_model.hpp"

namespace makesense::gateway {

using nlohmann::json;

namespace {

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
  int status;
};

json envelope(json body = json::object()) {
  body["schema"] = 1;
  return body;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw HttpError(400, "body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw HttpError(400, std::string("bad JSON: ") + e.what());
  }
}

std::optional<std::string> param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

TimePoint time_param(const httplib::Request& req, const char* name, TimePoint fallback) {
  auto v = param(req, name);
  if (!v) return fallback;
  try {
    return parse_timestamp(*v);
  } catch (const std::exception&) {
    throw HttpError(400, std::string("bad time in '") + name + "'");
  }
}

long long int_param(const httplib::Request& req, const char* name, long long fallback) {
  auto v = param(req, name);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long long n = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(name);
    return n;
  } catch (const std::exception&) {
    throw HttpError(400, std::string("bad integer in '") + name + "'");
  }
}

json reading_json(const datastore::SensorReading& r) {
  return {{"pseudonym", r.pseudonym}, {"site", r.site},       {"endpoint", r.endpoint},
          {"object", r.object_id},    {"instance", r.instance}, {"resource", r.resource},
          {"value", r.value},         {"unit", r.unit},         {"device_time", format_iso8601(r.device_time)},
          {"server_time", format_iso8601(r.server_time)}};
}

json registration_json(const lwm2m::Registration& r, const std::vector<lwm2m::Path>& observing) {
  json links = json::array(), obs = json::array();
  for (const auto& p : r.links) links.push_back(p.to_string());
  for (const auto& p : observing) obs.push_back(p.to_string());
  return {{"endpoint", r.endpoint},
          {"id", r.id},
          {"lifetime_s", r.lifetime_s},
          {"firmware", r.firmware_version},
          {"address", r.address.to_string()},
          {"registered_at", format_iso8601(r.registered_at)},
          {"last_update", format_iso8601(r.last_update)},
          {"expires_at", format_iso8601(r.expires_at())},
          {"links", links},
          {"observing", obs}};
}

json preference_json(const analytics::ComfortPreference& p, bool monitoring) {
  json j{{"desk", p.desk}, {"email", p.email}, {"monitoring", monitoring}};
  for (auto v : {analytics::Variable::Temperature, analytics::Variable::Humidity, analytics::Variable::Light,
                 analytics::Variable::Dust})
    j[analytics::to_string(v)] = p.target(v) ? json(*p.target(v)) : json(nullptr);
  return j;
}

json comfort_event_json(const analytics::ComfortEvent& e) {
  return {{"desk", e.desk},
          {"variable", analytics::to_string(e.variable)},
          {"measured", e.measured},
          {"target", e.target},
          {"fired_at", format_iso8601(e.fired_at)},
          {"buzzer", e.buzzer_executed}};
}

json push_json(const fota::PushResult& r) {
  json j{{"endpoint", r.endpoint},
         {"version", r.version},
         {"previous_version", r.previous_version},
         {"outcome", fota::to_string(r.outcome)},
         {"started", format_iso8601(r.started)}};
  if (r.outcome != fota::PushOutcome::Pending) j["finished"] = format_iso8601(r.finished);
  return j;
}

std::string code_string(coap::Code c) { return c.to_string(); }

/// Per-connection buffer for the SSE stream.
struct StreamBuffer {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> events;
  std::uint64_t dropped = 0;
};

}  // namespace

struct ApiServer::Impl {
  Testbed& bed;
  ApiOptions options;
  httplib::Server http;
  std::thread thread;
  int port = 0;

  Impl(Testbed& t, ApiOptions o) : bed(t), options(std::move(o)) {}

  template <class F>
  auto on_loop(F&& f) {
    return bed.scheduler().call(std::forward<F>(f));
  }

  /// Issues an LWM2M request on the loop and waits for its outcome.
  coap::Outcome await(std::function<void(lwm2m::Server::Done)> issue) {
    auto promise = std::make_shared<std::promise<coap::Outcome>>();
    auto once = std::make_shared<std::once_flag>();
    auto future = promise->get_future();
    on_loop([&] {
      issue([promise, once](const coap::Outcome& o) { std::call_once(*once, [&] { promise->set_value(o); }); });
    });
    if (future.wait_for(options.request_timeout) != std::future_status::ready)
      throw HttpError(504, "device did not answer");
    return future.get();
  }

  json outcome_json(const coap::Outcome& o, int& status) {
    if (!coap::succeeded(o)) {
      status = 504;
      return envelope({{"error", coap::to_string(std::get<coap::Failure>(o))}});
    }
    const auto& m = std::get<coap::Message>(o);
    status = m.code.is_success() ? 200 : 502;
    return envelope({{"code", code_string(m.code)}, {"payload", to_string(m.payload)}});
  }

  bool authorized(const httplib::Request& req) const {
    if (options.token.empty()) return true;
    return req.get_header_value("Authorization") == "Bearer " + options.token;
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guard(Handler h, bool open = false) {
    return [this, h = std::move(h), open](const httplib::Request& req, httplib::Response& res) {
      if (!open && !authorized(req)) return reply(res, 401, envelope({{"error", "unauthorized"}}));
      try {
        h(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status, envelope({{"error", e.what()}}));
      } catch (const lwm2m::NotRegistered& e) {
        reply(res, 404, envelope({{"error", std::string("not registered: ") + e.what()}}));
      } catch (const lwm2m::PathNotFound& e) {
        reply(res, 404, envelope({{"error", e.what()}}));
      } catch (const analytics::StalePreference& e) {
        reply(res, 404, envelope({{"error", e.what()}}));
      } catch (const analytics::InsufficientData& e) {
        reply(res, 422, envelope({{"error", e.what()}}));
      } catch (const json::exception& e) {
        reply(res, 400, envelope({{"error", e.what()}}));
      } catch (const Error& e) {
        reply(res, 400, envelope({{"error", e.what()}}));
      } catch (const std::exception& e) {
        reply(res, 500, envelope({{"error", e.what()}}));
      }
    };
  }

  lwm2m::Path path_from(const json& body) {
    if (!body.contains("path") || !body["path"].is_string()) throw HttpError(400, "missing 'path'");
    return lwm2m::Path::parse(body["path"].get<std::string>());
  }

  void routes() {
    http.Get("/api/health", guard([this](auto&, auto& res) { reply(res, 200, health()); }, true));
    http.Get("/api/metrics", guard([this](auto&, auto& res) {
               res.set_content(on_loop([this] { return render_metrics(bed); }), "text/plain; version=0.0.4");
             }));

    http.Get("/api/clients", guard([this](auto&, auto& res) {
               json list = on_loop([this] {
                 json out = json::array();
                 for (const auto& r : bed.registry().list())
                   out.push_back(registration_json(r, bed.server().observations(r.endpoint)));
                 return out;
               });
               reply(res, 200, envelope({{"clients", list}}));
             }));
    http.Get(R"(/api/clients/([^/]+))", guard([this](const httplib::Request& req, auto& res) {
               const std::string ep = req.matches[1];
               auto j = on_loop([&]() -> std::optional<json> {
                 auto r = bed.registry().find_endpoint(ep);
                 if (!r) return std::nullopt;
                 return registration_json(*r, bed.server().observations(ep));
               });
               if (!j) throw HttpError(404, "unknown client " + ep);
               reply(res, 200, envelope({{"client", *j}}));
             }));
    http.Post(R"(/api/clients/([^/]+)/(observe|read|write|execute))",
              guard([this](const httplib::Request& req, auto& res) {
                const std::string ep = req.matches[1], op = req.matches[2];
                const json body = body_of(req);
                const lwm2m::Path path = path_from(body);
                auto& server = bed.server();
                coap::Outcome o;
                if (op == "observe") {
                  if (body.value("cancel", false)) {
                    o = await([&](auto done) { server.cancel_observation(ep, path, done); });
                  } else {
                    const auto period = milliseconds(body.value("period_ms", 1000));
                    if (period <= Duration::zero()) throw HttpError(400, "period_ms must be positive");
                    o = await([&](auto done) { server.observe(ep, path, period, done); });
                  }
                } else if (op == "read") {
                  o = await([&](auto done) { server.read(ep, path, done); });
                } else if (op == "write") {
                  if (!body.contains("value")) throw HttpError(400, "missing 'value'");
                  const auto& v = body["value"];
                  const std::string value = v.is_string() ? v.get<std::string>() : v.dump();
                  o = await([&](auto done) { server.write(ep, path, value, done); });
                } else {
                  const std::string args = body.value("args", std::string());
                  o = await([&](auto done) { server.execute(ep, path, done, args); });
                }
                int status = 200;
                auto j = outcome_json(o, status);
                reply(res, status, j);
              }));

    http.Get("/api/blacklist", guard([this](auto&, auto& res) {
               json list = json::array();
               for (const auto& e : bed.blacklist().entries())
                 list.push_back({{"endpoint", e.endpoint}, {"path", e.path ? json(e.path->to_string()) : json(nullptr)}});
               reply(res, 200, envelope({{"entries", list}}));
             }));
    http.Post("/api/blacklist", guard([this](const httplib::Request& req, auto& res) {
                const json body = body_of(req);
                collector::Blacklist::Entry e;
                e.endpoint = body.at("endpoint").get<std::string>();
                if (e.endpoint.empty()) throw HttpError(400, "empty endpoint");
                if (body.contains("path") && !body["path"].is_null())
                  e.path = lwm2m::Path::parse(body["path"].get<std::string>());
                const std::string action = body.value("action", std::string("add"));
                bool changed;
                if (action == "add")
                  changed = bed.blacklist().add(e);
                else if (action == "remove")
                  changed = bed.blacklist().remove(e);
                else
                  throw HttpError(400, "action must be add or remove");
                reply(res, 200, envelope({{"changed", changed}}));
              }));

    http.Get("/api/data", guard([this](const httplib::Request& req, auto& res) {
               datastore::QueryArgs q;
               q.t0 = time_param(req, "from", TimePoint{});
               q.t1 = time_param(req, "to", TimePoint::max());
               const long long limit = int_param(req, "limit", 10000);
               if (limit < 0) throw HttpError(400, "limit must be >= 0");
               q.limit = static_cast<std::size_t>(limit);
               if (req.has_param("object")) q.object_id = static_cast<int>(int_param(req, "object", 0));
               const long long buckets = int_param(req, "buckets", 0);
               auto rows = on_loop([&]() -> std::optional<json> {
                 if (auto ep = param(req, "endpoint")) {
                   auto p = bed.pseudonym_of(*ep);
                   if (!p) return std::nullopt;
                   q.pseudonym = *p;
                 }
                 if (auto p = param(req, "pseudonym")) q.pseudonym = *p;
                 if (auto s = param(req, "site")) q.site = bed.site_token(*s);
                 json out = json::array();
                 if (buckets > 0) {
                   for (const auto& b : bed.store().downsample(q, static_cast<std::size_t>(buckets)))
                     out.push_back({{"pseudonym", b.series->pseudonym},
                                    {"object", b.series->object_id},
                                    {"instance", b.series->instance},
                                    {"resource", b.series->resource},
                                    {"start", format_iso8601(b.start)},
                                    {"mean", b.mean},
                                    {"min", b.min},
                                    {"max", b.max},
                                    {"count", b.count}});
                 } else {
                   for (const auto& r : bed.store().query(q)) out.push_back(reading_json(r));
                 }
                 return out;
               });
               if (!rows) throw HttpError(404, "no data for endpoint");
               reply(res, 200, envelope({{"readings", *rows}}));
             }));

    http.Get("/api/stream", guard([this](const httplib::Request& req, httplib::Response& res) {
               auto buf = std::make_shared<StreamBuffer>();
               std::optional<std::string> pseudonym;
               if (auto ep = param(req, "endpoint")) {
                 pseudonym = on_loop([&] { return bed.pseudonym_of(*ep); });
                 if (!pseudonym) throw HttpError(404, "unknown endpoint");
               }
               std::optional<int> object;
               if (req.has_param("object")) object = static_cast<int>(int_param(req, "object", 0));
               const auto id = bed.subscribe([buf, pseudonym, object](const datastore::SensorReading& r) {
                 if (pseudonym && r.pseudonym != *pseudonym) return;
                 if (object && r.object_id != *object) return;
                 std::lock_guard lock(buf->mu);
                 if (buf->events.size() >= 1000) {
                   buf->events.pop_front();
                   ++buf->dropped;
                 }
                 buf->events.push_back(reading_json(r).dump());
                 buf->cv.notify_one();
               });
               res.set_header("Cache-Control", "no-cache");
               res.set_chunked_content_provider(
                   "text/event-stream",
                   [buf](std::size_t, httplib::DataSink& sink) {
                     std::deque<std::string> out;
                     {
                       std::unique_lock lock(buf->mu);
                       buf->cv.wait_for(lock, std::chrono::seconds(1), [&] { return !buf->events.empty(); });
                       out.swap(buf->events);
                     }
                     std::string chunk;
                     if (out.empty()) chunk = ": keepalive\n\n";
                     for (const auto& e : out) chunk += "data: " + e + "\n\n";
                     return sink.is_writable() && sink.write(chunk.data(), chunk.size());
                   },
                   [this, id](bool) { bed.unsubscribe(id); });
             }));

    http.Get("/api/comfort", guard([this](auto&, auto& res) {
               auto j = on_loop([this] {
                 json prefs = json::array(), events = json::array();
                 for (const auto& p : bed.comfort().preferences())
                   prefs.push_back(preference_json(p, bed.comfort().monitoring(p.desk)));
                 for (const auto& e : bed.comfort_events()) events.push_back(comfort_event_json(e));
                 return envelope({{"preferences", prefs}, {"events", events}});
               });
               reply(res, 200, j);
             }));
    http.Post("/api/comfort", guard([this](const httplib::Request& req, auto& res) {
                const json body = body_of(req);
                analytics::ComfortPreference p;
                p.desk = body.at("desk").get<std::string>();
                if (p.desk.empty()) throw HttpError(400, "empty desk");
                p.email = body.value("email", std::string());
                auto num = [&](const char* k) -> std::optional<double> {
                  if (!body.contains(k) || body[k].is_null()) return std::nullopt;
                  if (!body[k].is_number()) throw HttpError(400, std::string("'") + k + "' must be a number");
                  return body[k].get<double>();
                };
                p.temperature = num("temperature");
                p.humidity = num("humidity");
                p.light = num("light");
                p.dust = num("dust");
                on_loop([&] { bed.comfort().set_preference(p); });
                reply(res, 200, envelope({{"preference", preference_json(p, on_loop([&] {
                                                                 return bed.comfort().monitoring(p.desk);
                                                               }))}}));
              }));
    http.Post(R"(/api/comfort/([^/]+)/(start|stop))", guard([this](const httplib::Request& req, auto& res) {
                const std::string desk = req.matches[1], op = req.matches[2];
                on_loop([&] { op == "start" ? bed.comfort().start(desk) : bed.comfort().stop(desk); });
                reply(res, 200, envelope({{"desk", desk}, {"monitoring", op == "start"}}));
              }));

    http.Put("/api/fota/images", guard([this](const httplib::Request& req, auto& res) {
               const std::string version = on_loop([&] { return bed.images().put(as_bytes(req.body)); });
               reply(res, 201, envelope({{"version", version}}));
             }));
    http.Get("/api/fota", guard([this](auto&, auto& res) {
               auto j = on_loop([this] {
                 json results = json::array(), images = json::array();
                 for (const auto& r : bed.fota().results()) results.push_back(push_json(r));
                 for (const auto& v : bed.images().versions()) images.push_back(v);
                 return envelope({{"results", results}, {"images", images}, {"active", bed.fota().active()}});
               });
               reply(res, 200, j);
             }));
    http.Post("/api/fota", guard([this](const httplib::Request& req, auto& res) {
                const json body = body_of(req);
                const std::string version = body.at("version").get<std::string>();
                std::vector<std::string> targets = body.at("targets").get<std::vector<std::string>>();
                if (targets.empty()) throw HttpError(400, "no targets");
                on_loop([&] { bed.fota().push(targets, version); });
                reply(res, 202, envelope({{"version", version}, {"targets", targets}}));
              }));

    http.Get("/api/quality", guard([this](const httplib::Request& req, auto& res) {
               const TimePoint t0 = time_param(req, "from", TimePoint{});
               const TimePoint t1 = time_param(req, "to", TimePoint{});
               if (t1 <= t0) throw HttpError(400, "need from < to");
               const long long interval = int_param(req, "interval_ms", 0);
               if (interval <= 0) throw HttpError(400, "interval_ms must be positive");
               std::vector<int> objects{3303, 3304};
               if (auto o = param(req, "objects")) {
                 objects.clear();
                 std::stringstream ss(*o);
                 std::string item;
                 while (std::getline(ss, item, ','))
                   try {
                     objects.push_back(std::stoi(item));
                   } catch (const std::exception&) {
                     throw HttpError(400, "bad object list");
                   }
               }
               const std::string site = param(req, "site").value_or(bed.options().default_site);
               auto verdicts = on_loop([&] {
                 auto in = bed.quality_input(site, t0, t1, objects);
                 return analytics::quality_compare(in, static_cast<std::size_t>((t1 - t0).count() / interval));
               });
               json eggs = json::array();
               for (const auto& v : verdicts) {
                 json sensors = json::array();
                 for (const auto& s : v.sensors)
                   sensors.push_back({{"object", s.object_id},
                                      {"mean", s.mean},
                                      {"median", s.median_of_means},
                                      {"mad", s.mad},
                                      {"readings", s.readings},
                                      {"delivery_ratio", s.delivery_ratio},
                                      {"outlier", s.outlier},
                                      {"dropout", s.dropout}});
                 eggs.push_back({{"egg", v.egg}, {"flagged", v.flagged}, {"sensors", sensors}});
               }
               reply(res, 200, envelope({{"eggs", eggs}}));
             }));

    http.Post("/api/diary", guard([this](const httplib::Request& req, auto& res) {
                auto site = param(req, "site");
                if (!site || site->empty()) throw HttpError(400, "missing site");
                const std::size_t n = on_loop([&] {
                  const std::string token = bed.site_token(*site);
                  return bed.diary().import_csv(req.body, token, [this](const std::string& who) {
                    return bed.pseudonyms().token("who/" + who);
                  });
                });
                reply(res, 200, envelope({{"imported", n}}));
              }));
  }

  json health() {
    return on_loop([this] {
      json workers = json::object();
      for (const auto& [name, h] : bed.supervisor().health())
        workers[name] = {{"state", collector::to_string(h.state)}, {"restarts", h.restarts}};
      json queues = json::object();
      for (const auto& q : bed.broker().queue_names()) {
        const auto s = bed.broker().queue_stats(q);
        queues[q] = {{"ready", s.ready}, {"in_flight", s.in_flight}, {"consumers", s.consumers}};
      }
      const bool ok = !bed.supervisor().any_given_up();
      return envelope({{"status", ok ? "ok" : "degraded"},
                       {"registrations", bed.registry().size()},
                       {"workers", workers},
                       {"queues", queues},
                       {"now", format_iso8601(bed.scheduler().now())}});
    });
  }
};

ApiServer::ApiServer(Testbed& testbed, ApiOptions options) : impl_(std::make_unique<Impl>(testbed, std::move(options))) {
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  if (impl_->port) return impl_->port;
  if (impl_->options.port == 0)
    impl_->port = impl_->http.bind_to_any_port(impl_->options.host);
  else if (impl_->http.bind_to_port(impl_->options.host, impl_->options.port))
    impl_->port = impl_->options.port;
  if (impl_->port <= 0) throw Error("cannot bind HTTP API on " + impl_->options.host);
  return impl_->port;
}

void ApiServer::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void ApiServer::listen() {
  bind();
  impl_->http.listen_after_bind();
}

void ApiServer::stop() {
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string render_metrics(Testbed& bed) {
  std::ostringstream out;
  auto metric = [&](const std::string& name, const std::string& labels, double v) {
    out << "makesense_" << name;
    if (!labels.empty()) out << '{' << labels << '}';
    out << ' ' << v << '\n';
  };
  const auto a = bed.accounting();
  metric("notifications_total", "", static_cast<double>(a.notifications));
  metric("records_processed_total", "", static_cast<double>(a.processed));
  metric("readings_published_total", "", static_cast<double>(a.published));
  metric("dead_letters_total", "", static_cast<double>(a.dead_lettered));
  metric("store_duplicates_total", "", static_cast<double>(a.dedup));
  metric("readings_stored_total", "", static_cast<double>(a.stored));
  metric("registrations", "", static_cast<double>(bed.registry().size()));
  for (const auto& q : bed.broker().queue_names()) {
    const auto s = bed.broker().queue_stats(q);
    const std::string l = "queue=\"" + q + "\"";
    metric("queue_ready", l, static_cast<double>(s.ready));
    metric("queue_in_flight", l, static_cast<double>(s.in_flight));
    metric("queue_redelivered_total", l, static_cast<double>(s.redelivered));
  }
  for (const auto& [name, h] : bed.supervisor().health())
    metric("worker_restarts_total", "worker=\"" + name + "\"", static_cast<double>(h.restarts));
  if (const auto* s = bed.secure_server()) {
    const auto st = s->stats();
    metric("secure_handshakes_total", "", static_cast<double>(st.handshakes));
    metric("secure_auth_failures_total", "", static_cast<double>(st.auth_failures + st.unknown_psk));
    metric("secure_integrity_failures_total", "", static_cast<double>(st.integrity_failures));
    metric("secure_replays_total", "", static_cast<double>(st.replays));
  }
  metric("comfort_events_total", "", static_cast<double>(bed.comfort_events().size()));
  return out.str();
}

}  // namespace makesense::gateway
