// makesense: run the backend, drive simulated fleets, and operate on a data dir.
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "makesense/datastore/csv.hpp"
#include "makesense/gateway/api.hpp"
#include "makesense/gateway/simulation.hpp"
#include "makesense/net/udp.hpp"

using namespace makesense;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Wrong arguments discovered after parsing; exits 2 like a CLI11 error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

Scheduler* g_running = nullptr;
void on_signal(int) {
  if (g_running) g_running->stop();
}

eggsim::ScenarioSpec load_scenario(const std::string& name, std::uint64_t seed, std::optional<Duration> duration) {
  eggsim::ScenarioSpec s;
  if (name == "office") {
    s = eggsim::office_scenario();
    s.seed = seed;
  } else if (name == "home") {
    s = eggsim::home_scenario(20, seed);
  } else if (name == "colocated") {
    s = eggsim::colocated_scenario();
    s.seed = seed;
  } else if (name == "walk") {
    s = eggsim::walk_scenario(seed);
  } else if (fs::exists(name)) {
    s = eggsim::parse_scenario(read_file(name));
  } else {
    throw UsageError("unknown scenario '" + name + "' (office, home, colocated, walk or a JSON file)");
  }
  if (duration) s.duration = *duration;
  return s;
}

eggsim::FaultPlan load_faults(const std::string& file, const std::vector<std::string>& biases) {
  eggsim::FaultPlan plan;
  if (!file.empty()) plan = eggsim::parse_fault_plan(read_file(file));
  for (const auto& b : biases) plan.faults.push_back(eggsim::parse_bias(b));
  return plan;
}

json accounting_json(const gateway::Accounting& a) {
  return {{"notifications", a.notifications}, {"processed", a.processed}, {"published", a.published},
          {"dead_lettered", a.dead_lettered}, {"dedup", a.dedup},         {"stored", a.stored}};
}

datastore::HistoricalStore open_store(const std::string& data) {
  datastore::HistoricalStore::Options o;
  o.dir = fs::path(data) / "segments";
  if (!fs::is_directory(o.dir)) throw Error("no store under " + data);
  return datastore::HistoricalStore(o);
}

std::string token_from_env(const std::string& var) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  return v ? v : "";
}

// ---------------------------------------------------------------------------

struct ServerArgs {
  std::string data = "data";
  std::string coap = "0.0.0.0:5684";
  std::string http = "127.0.0.1:8080";
  std::string token_env = "MAKESENSE_TOKEN";
  std::string site = "site";
  std::vector<std::string> key_files;
  bool insecure = false;
};

int server_run(const ServerArgs& a) {
  Scheduler clock(Scheduler::Mode::Real);
  net::UdpReactor reactor(clock);
  auto port = reactor.bind(net::Address::parse(a.coap));
  gateway::TestbedOptions o;
  o.data_dir = a.data;
  o.default_site = a.site;
  o.secure = !a.insecure;
  gateway::Testbed bed(clock, *port, o);
  for (const auto& f : a.key_files) bed.keys().load(f);
  const auto http = net::Address::parse(a.http);
  const std::string token = token_from_env(a.token_env);
  if (token.empty()) std::cerr << "warning: no API token in $" << a.token_env << ", API is open\n";
  gateway::ApiServer api(bed, {token, http.host, http.port});
  const int http_port = api.bind();
  api.start();
  std::cerr << "coap" << (a.insecure ? "" : "+psk") << " on " << port->local_address().to_string() << ", api on "
            << http.host << ':' << http_port << ", " << bed.keys().size() << " keys\n";
  g_running = &clock;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  clock.run();
  g_running = nullptr;
  api.stop();
  bed.stop();
  std::cout << accounting_json(bed.accounting()).dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SimArgs {
  std::string scenario = "office";
  std::uint64_t seed = 1;
  std::string duration;
  std::string faults;
  std::vector<std::string> biases;
  std::string data;
  std::string server;     // host:port of a running server; empty = in-process
  std::string keys_out;   // PSK table for the server
  bool insecure = false;
};

int sim_run(const SimArgs& a) {
  const std::optional<Duration> duration = a.duration.empty() ? std::nullopt : std::optional(parse_duration(a.duration));
  auto scenario = load_scenario(a.scenario, a.seed, duration);
  auto faults = load_faults(a.faults, a.biases);

  if (a.server.empty()) {
    std::optional<fs::path> tmp;
    gateway::SimulationOptions o;
    o.scenario = scenario;
    o.faults = faults;
    o.fleet.secure = !a.insecure;
    if (a.data.empty()) {
      tmp = fs::temp_directory_path() / ("makesense-sim-" + std::to_string(::getpid()));
      o.testbed.data_dir = *tmp;
    } else {
      o.testbed.data_dir = a.data;
    }
    json report;
    {
      gateway::Simulation sim(o);
      sim.run();
      report = {{"schema", 1},
                {"scenario", eggsim::to_string(scenario.kind)},
                {"devices", sim.fleet().devices().size()},
                {"virtual_seconds", to_seconds(scenario.duration)},
                {"accounting", accounting_json(sim.testbed().accounting())},
                {"comfort_events", sim.testbed().comfort_events().size()},
                {"data_dir", o.testbed.data_dir.string()}};
    }
    if (tmp) {
      fs::remove_all(*tmp);
      report.erase("data_dir");
    }
    std::cout << report.dump(2) << "\n";
    return 0;
  }

  Scheduler clock(Scheduler::Mode::Real);
  net::UdpReactor reactor(clock);
  eggsim::FleetOptions fo;
  fo.secure = !a.insecure;
  eggsim::Fleet fleet(
      clock, scenario, net::Address::parse(a.server),
      [&](const eggsim::DeviceSpec&, std::size_t) { return reactor.bind({"0.0.0.0", 0}); }, fo, faults);
  if (!a.keys_out.empty()) {
    secure::KeyStore keys;
    fleet.provision(keys);
    keys.save(a.keys_out);
    std::cerr << "wrote " << keys.size() << " keys to " << a.keys_out << "\n";
  }
  fleet.sample_until(clock.now() + scenario.duration);
  fleet.start();
  g_running = &clock;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  clock.after(scenario.duration + seconds(2), [&] { clock.stop(); });
  clock.run();
  g_running = nullptr;
  int registered = 0;
  for (auto* d : fleet.devices()) registered += d->client().state() == lwm2m::Client::State::Registered;
  fleet.stop();
  std::cout << json{{"schema", 1}, {"devices", fleet.devices().size()}, {"registered_at_end", registered}}.dump()
            << "\n";
  return 0;
}

/// PSK table for a scenario's devices, for the server's --keys.
int sim_keys(const SimArgs& a, const std::string& out) {
  const auto scenario = load_scenario(a.scenario, a.seed, std::nullopt);
  secure::KeyStore keys;
  for (const auto& site : scenario.sites) {
    for (int i = 1; i <= site.egg_count; ++i) {
      const auto ep = eggsim::egg_endpoint(scenario, site, i);
      keys.add(eggsim::Fleet::derive_identity(scenario.seed, ep));
    }
    if (!site.energy_channels.empty())
      keys.add(eggsim::Fleet::derive_identity(scenario.seed, eggsim::hub_endpoint(site)));
  }
  keys.save(out);
  std::cerr << "wrote " << keys.size() << " keys to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct QualityArgs {
  std::string data;
  std::string site = "site";
  std::string from, to;
  int interval_ms = 0;
  bool simulate = false;
  std::vector<std::string> biases;
  double hours = 24;
  int eggs = 8;
  int sample_ms = 10000;
};

int quality_test(const QualityArgs& a) {
  std::vector<analytics::EggVerdict> verdicts;
  if (a.simulate) {
    const auto tmp = fs::temp_directory_path() / ("makesense-quality-" + std::to_string(::getpid()));
    {
      gateway::SimulationOptions o;
      o.scenario = eggsim::colocated_scenario(a.eggs, a.sample_ms, from_seconds(a.hours * 3600));
      o.faults = load_faults({}, a.biases);
      o.testbed.data_dir = tmp;
      o.testbed.analytics = false;
      gateway::Simulation sim(o);
      sim.run();
      auto in = sim.testbed().quality_input(o.testbed.default_site, sim.t0(), sim.end(), eggsim::default_sensors());
      verdicts = analytics::quality_compare(
          in, static_cast<std::size_t>(o.scenario.duration.count() / o.scenario.sample_interval_ms));
    }
    fs::remove_all(tmp);
  } else {
    if (a.data.empty() || a.from.empty() || a.to.empty() || a.interval_ms <= 0)
      throw UsageError("quality-test needs --simulate, or --data, --from, --to and --interval-ms");
    const TimePoint t0 = parse_timestamp(a.from), t1 = parse_timestamp(a.to);
    if (t1 <= t0) throw UsageError("--from must be before --to");
    collector::PseudonymTable pseudonyms(fs::path(a.data) / "secure" / "pseudonyms.json");
    auto store = open_store(a.data);
    datastore::QueryArgs q;
    q.site = pseudonyms.token("site/" + a.site);
    q.t0 = t0;
    q.t1 = t1;
    analytics::QualityInput in;
    for (int obj : eggsim::default_sensors()) {
      q.object_id = obj;
      for (const auto& r : store.query(q)) in[r.endpoint][obj].push_back(r.value);
    }
    if (in.empty()) throw Error("no readings for site " + a.site + " in the window");
    verdicts = analytics::quality_compare(in, static_cast<std::size_t>((t1 - t0).count() / a.interval_ms));
  }
  std::cout << analytics::quality_csv(verdicts);
  int flagged = 0;
  for (const auto& v : verdicts) flagged += v.flagged;
  std::cerr << flagged << " of " << verdicts.size() << " eggs flagged\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string data, out, site, endpoint, from, to;
  int object = 0;
};

int export_data(const ExportArgs& a) {
  collector::PseudonymTable pseudonyms(fs::path(a.data) / "secure" / "pseudonyms.json");
  auto store = open_store(a.data);
  datastore::QueryArgs q;
  if (!a.site.empty()) q.site = pseudonyms.token("site/" + a.site);
  if (!a.endpoint.empty()) {
    auto p = pseudonyms.lookup(a.endpoint);
    if (!p) throw Error("no data for endpoint " + a.endpoint);
    q.pseudonym = *p;
  }
  if (a.object) q.object_id = a.object;
  if (!a.from.empty()) q.t0 = parse_timestamp(a.from);
  if (!a.to.empty()) q.t1 = parse_timestamp(a.to);
  std::size_t n;
  if (a.out.empty() || a.out == "-") {
    const auto rows = store.query(q);
    datastore::write_export_csv(std::cout, rows);
    n = rows.size();
  } else {
    n = datastore::export_csv(store, q, a.out);
  }
  std::cerr << n << " readings exported\n";
  return 0;
}

int diary_import(const std::string& data, const std::string& site, const std::string& file) {
  collector::PseudonymTable pseudonyms(fs::path(data) / "secure" / "pseudonyms.json");
  datastore::DiaryStore diary(fs::path(data) / "diary.jsonl");
  const std::size_t n = diary.import_csv(read_file(file), pseudonyms.token("site/" + site),
                                         [&](const std::string& who) { return pseudonyms.token("who/" + who); });
  std::cerr << n << " diary slots imported\n";
  return 0;
}

int fota_build(const std::string& version, const std::string& payload, const std::string& out) {
  const std::string bytes = read_file(payload);
  const Bytes image = fota::build_image(as_bytes(bytes), version);
  std::ofstream f(out, std::ios::binary);
  f.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
  if (!f) throw Error("cannot write " + out);
  const auto info = fota::verify_image(image);
  std::cout << json{{"version", info.version}, {"length", info.length}, {"crc", info.crc}}.dump() << "\n";
  return 0;
}

struct PushArgs {
  std::string api = "http://127.0.0.1:8080";
  std::string token_env = "MAKESENSE_TOKEN";
  std::string version, image;
  std::vector<std::string> targets;
  int wait_s = 900;
};

int fota_push(const PushArgs& a) {
  httplib::Client cli(a.api);
  cli.set_read_timeout(60, 0);
  if (auto t = token_from_env(a.token_env); !t.empty()) cli.set_bearer_token_auth(t);
  auto check = [](const httplib::Result& r, int want) {
    if (!r) throw Error("API unreachable: " + httplib::to_string(r.error()));
    if (r->status != want) throw Error("API answered " + std::to_string(r->status) + ": " + r->body);
    return json::parse(r->body);
  };
  if (!a.image.empty()) check(cli.Put("/api/fota/images", read_file(a.image), "application/octet-stream"), 201);
  check(cli.Post("/api/fota", json{{"version", a.version}, {"targets", a.targets}}.dump(), "application/json"), 202);
  std::map<std::string, std::string> outcome;
  for (int i = 0; i < a.wait_s; ++i) {
    const json j = check(cli.Get("/api/fota"), 200);
    outcome.clear();
    for (const auto& r : j["results"])
      if (r["version"] == a.version) outcome[r["endpoint"]] = r["outcome"];
    bool done = true;
    for (const auto& t : a.targets) done &= outcome.count(t) && outcome[t] != "PENDING";
    if (done) break;
    std::this_thread::sleep_for(std::chrono::seconds(1));
  }
  int ok = 0;
  for (const auto& t : a.targets) {
    const std::string o = outcome.count(t) ? outcome[t] : "PENDING";
    ok += o == "SUCCESS";
    std::cout << t << ' ' << o << "\n";
  }
  return ok == static_cast<int>(a.targets.size()) ? 0 : 1;
}

int replay(const std::string& data) {
  auto store = open_store(data);
  const auto s = store.stats();
  std::cout << json{{"schema", 1},          {"readings", s.replayed},    {"series", s.series},
                    {"segments", s.segments}, {"corrupt_records", s.corrupt_records}}
                   .dump()
            << "\n";
  return s.corrupt_records ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MakeSense testbed backend and tools"};
  app.require_subcommand(1);

  ServerArgs server;
  auto* srv = app.add_subcommand("server", "Backend server")->require_subcommand(1);
  auto* srv_run = srv->add_subcommand("run", "Serve CoAP devices and the HTTP API until interrupted");
  srv_run->add_option("--data", server.data, "Data directory")->capture_default_str();
  srv_run->add_option("--coap", server.coap, "UDP bind address")->capture_default_str();
  srv_run->add_option("--http", server.http, "HTTP bind address")->capture_default_str();
  srv_run->add_option("--token-env", server.token_env, "Environment variable holding the API bearer token")
      ->capture_default_str();
  srv_run->add_option("--site", server.site, "Site name for endpoints without a site prefix")->capture_default_str();
  srv_run->add_option("--keys", server.key_files, "PSK table files to load (id hexkey per line)");
  srv_run->add_flag("--insecure", server.insecure, "Plain CoAP without the PSK layer");

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "Simulated egg fleets")->require_subcommand(1);
  auto* sim_run_cmd = sim_cmd->add_subcommand("run", "Run a scenario in-process, or against --server");
  sim_run_cmd->add_option("--scenario", sim.scenario, "office, home, colocated, walk or a JSON file")
      ->capture_default_str();
  sim_run_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_run_cmd->add_option("--duration", sim.duration, "e.g. 10m, 1h");
  sim_run_cmd->add_option("--faults", sim.faults, "Fault plan JSON")->check(CLI::ExistingFile);
  sim_run_cmd->add_option("--bias", sim.biases, "egg:sensor:offset, e.g. egg-3:temp:+2");
  sim_run_cmd->add_option("--data", sim.data, "Keep the in-process data directory here");
  sim_run_cmd->add_option("--server", sim.server, "host:port of a running server");
  sim_run_cmd->add_option("--keys-out", sim.keys_out, "Write the fleet's PSK table here");
  sim_run_cmd->add_flag("--insecure", sim.insecure);

  std::string keys_out;
  auto* sim_keys_cmd = sim_cmd->add_subcommand("keys", "Write the PSK table a scenario's fleet will use");
  sim_keys_cmd->add_option("--scenario", sim.scenario)->capture_default_str();
  sim_keys_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_keys_cmd->add_option("--out", keys_out)->required();

  QualityArgs quality;
  auto* q_cmd = app.add_subcommand("quality-test", "Co-location comparison; prints a CSV report");
  q_cmd->add_option("--data", quality.data);
  q_cmd->add_option("--site", quality.site)->capture_default_str();
  q_cmd->add_option("--from", quality.from);
  q_cmd->add_option("--to", quality.to);
  q_cmd->add_option("--interval-ms", quality.interval_ms, "Expected sampling interval");
  q_cmd->add_flag("--simulate", quality.simulate, "Run a simulated co-location instead of reading --data");
  q_cmd->add_option("--bias", quality.biases, "With --simulate: egg:sensor:offset");
  q_cmd->add_option("--hours", quality.hours)->capture_default_str()->check(CLI::PositiveNumber);
  q_cmd->add_option("--eggs", quality.eggs)->capture_default_str()->check(CLI::Range(2, 64));
  q_cmd->add_option("--sample-ms", quality.sample_ms)->capture_default_str()->check(CLI::PositiveNumber);

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export", "Export readings as CSV");
  ex_cmd->add_option("--data", ex.data)->required();
  ex_cmd->add_option("--out", ex.out, "Output file, '-' for stdout");
  ex_cmd->add_option("--site", ex.site);
  ex_cmd->add_option("--endpoint", ex.endpoint);
  ex_cmd->add_option("--object", ex.object);
  ex_cmd->add_option("--from", ex.from);
  ex_cmd->add_option("--to", ex.to);

  std::string diary_data, diary_site, diary_file;
  auto* diary = app.add_subcommand("diary", "Activity diaries")->require_subcommand(1);
  auto* diary_imp = diary->add_subcommand("import", "Import a diary CSV for one site");
  diary_imp->add_option("--data", diary_data)->required();
  diary_imp->add_option("--site", diary_site)->required();
  diary_imp->add_option("--file", diary_file)->required()->check(CLI::ExistingFile);

  std::string fw_version, fw_payload, fw_out;
  PushArgs push;
  auto* fota_cmd = app.add_subcommand("fota", "Firmware images")->require_subcommand(1);
  auto* fota_b = fota_cmd->add_subcommand("build", "Wrap a payload into an image");
  fota_b->add_option("--version", fw_version)->required();
  fota_b->add_option("--payload", fw_payload)->required()->check(CLI::ExistingFile);
  fota_b->add_option("--out", fw_out)->required();
  auto* fota_p = fota_cmd->add_subcommand("push", "Upload (optional) and roll out an image through the API");
  fota_p->add_option("--api", push.api)->capture_default_str();
  fota_p->add_option("--token-env", push.token_env)->capture_default_str();
  fota_p->add_option("--version", push.version)->required();
  fota_p->add_option("--image", push.image)->check(CLI::ExistingFile);
  fota_p->add_option("--targets", push.targets)->required()->delimiter(',');
  fota_p->add_option("--wait", push.wait_s, "Seconds to wait for results")->capture_default_str();

  std::string replay_data;
  auto* replay_cmd = app.add_subcommand("replay", "Replay the store from disk and report integrity");
  replay_cmd->add_option("--data", replay_data)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*srv_run) return server_run(server);
    if (*sim_run_cmd) return sim_run(sim);
    if (*sim_keys_cmd) return sim_keys(sim, keys_out);
    if (*q_cmd) return quality_test(quality);
    if (*ex_cmd) return export_data(ex);
    if (*diary_imp) return diary_import(diary_data, diary_site, diary_file);
    if (*fota_b) return fota_build(fw_version, fw_payload, fw_out);
    if (*fota_p) return fota_push(push);
    if (*replay_cmd) return replay(replay_data);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
