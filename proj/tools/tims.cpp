// tims: run scripted trials, fit guide paths, analyze and replay session
// logs, and serve the bus for the console.

#include "tims/analytics.hpp"
#include "tims/bus/session_log.hpp"
#include "tims/bus/transport.hpp"
#include "tims/lfd_io.hpp"
#include "tims/orchestrator/config.hpp"
#include "tims/orchestrator/live.hpp"
#include "tims/orchestrator/trial.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

using namespace tims;
using bus::json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::filesystem::path default_log_dir() {
  const char* env = std::getenv("TIMS_LOG_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path();
}

void print_table(const std::vector<TrialMetrics>& trials) {
  std::printf("%-28s %-6s %10s %12s %8s %9s\n", "trial", "setting", "rmse_um", "insert_um", "time_s", "reminders");
  for (const auto& t : trials)
    std::printf("%-28s %-6s %10.1f %12.1f %8.2f %9d\n", t.trial_id.c_str(), to_string(t.setting).c_str(),
                t.trajectory_rmse_um, t.mean_insertion_error_um(), t.time_cost_s, t.reminder_count);
}

void print_summary(const Summary& s) {
  if (s.curve.trials.size() < 2) return;
  std::printf("\n%-6s %6s %10s %12s %8s %9s\n", "setting", "trials", "rmse_um", "insert_um", "time_s", "reminders");
  for (const auto& [setting, m] : s.per_setting)
    std::printf("%-6s %6zu %10.1f %12.1f %8.2f %9.2f\n", to_string(setting).c_str(), m.trials,
                m.trajectory_rmse_um, m.insertion_error_um, m.time_cost_s, m.reminder_count);
}

json summary_json(const Summary& s) {
  json out = json::object();
  for (const auto& [setting, m] : s.per_setting)
    out[to_string(setting)] = {{"trials", m.trials},
                               {"trajectory_rmse_um", m.trajectory_rmse_um},
                               {"insertion_error_um", m.insertion_error_um},
                               {"time_cost_s", m.time_cost_s},
                               {"reminder_count", m.reminder_count}};
  return out;
}

TrialMetrics metrics_of_log(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + file.string());
  MetricsCollector collector;
  bus::replay(in, bus::kBatchSpeed, [&](const bus::Envelope& e) { collector.consume(e); });
  return collector.metrics();
}

int cmd_run(const std::string& config_file, const std::vector<std::string>& overrides, int repeat) {
  auto kv = config_file.empty() ? KeyValueFile{} : KeyValueFile::load(config_file);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  SessionConfig cfg = session_config_from(kv);
  if (cfg.log_dir.empty()) cfg.log_dir = default_log_dir();
  const TrialInputs inputs = prepare_inputs(cfg);
  std::vector<TrialMetrics> all;
  for (int k = 0; k < repeat; ++k) {
    SessionConfig c = cfg;
    if (repeat > 1) {
      c.op.seed = cfg.op.seed + static_cast<std::uint64_t>(k);
      if (!cfg.trial_id.empty()) c.trial_id = cfg.trial_id + "-" + std::to_string(k + 1);
    }
    const auto result = run_trial(c, inputs);
    if (!result.log_file.empty()) std::fprintf(stderr, "log: %s\n", result.log_file.string().c_str());
    all.push_back(result.metrics);
  }
  print_table(all);
  print_summary(summarize(all));
  return 0;
}

int cmd_demo_record(const std::string& config_file, const std::string& out_dir, int count, std::int64_t seed,
                    bool from_bus, double seconds, const std::string& name) {
  std::filesystem::create_directories(out_dir);
  if (from_bus) {
    // Record follower positions while the pedal is engaged.
    const auto opts = bus::server_options_from_env();
    bus::BusClient client;
    client.connect("127.0.0.1", opts.bus_port);
    client.subscribe("follower");
    Path points;
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    while (std::chrono::steady_clock::now() < until && !g_interrupted) {
      const auto env = client.receive_envelope(std::chrono::milliseconds(100));
      if (!env || !env->payload.value("engaged", false)) continue;
      const auto& p = env->payload.at("pos_um");
      points.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
    const auto file = std::filesystem::path(out_dir) / (name + ".jsonl");
    std::ofstream out(file);
    write_demo(out, points, name);
    std::printf("%zu points -> %s\n", points.size(), file.string().c_str());
    return points.size() >= 2 ? 0 : 1;
  }
  SessionConfig cfg = config_file.empty() ? SessionConfig{} : load_session_config(config_file);
  if (count > 0) cfg.guide.demo_count = count;
  if (seed >= 0) cfg.guide.demo_seed = static_cast<std::uint64_t>(seed);
  const Phantom ph = cfg.phantom_file.empty() ? default_phantom() : load_phantom(cfg.phantom_file);
  for (const auto& d : synthesize_expert_demos(ph, cfg.guide)) {
    const auto file = std::filesystem::path(out_dir) / (d.source_id + ".jsonl");
    std::ofstream out(file);
    write_demo(out, d.points, d.source_id);
    std::printf("%zu points -> %s\n", d.points.size(), file.string().c_str());
  }
  return 0;
}

int cmd_fit_guide(const std::vector<std::string>& demos, const std::string& out_file, int resample) {
  DemonstrationSet set;
  set.resample_count = resample;
  for (const auto& f : demos) {
    std::string id;
    const Path raw = read_demo(std::filesystem::path(f), &id);
    set.demos.push_back(preprocess(raw, resample, id.empty() ? f : id));
  }
  const auto result = fit(set);
  std::array<GprHyperparams, 3> hyper = {result.model.axis(0).hyper(), result.model.axis(1).hyper(),
                                         result.model.axis(2).hyper()};
  std::ofstream out(out_file);
  if (!out) throw Error("io", "cannot write " + out_file);
  write_guide_path(out, result.guide, hyper);
  double max_ci = 0;
  for (const auto& c : result.guide.ci_halfwidth) max_ci = std::max(max_ci, c.maxCoeff());
  std::printf("%zu demos, %d points -> %s (max CI half-width %.1f um)\n", set.demos.size(), resample,
              out_file.c_str(), max_ci);
  for (int a = 0; a < 3; ++a)
    std::printf("  axis %c: length_scale %.2f signal_variance %.4g\n", "xyz"[a], hyper[a].length_scale,
                hyper[a].signal_variance);
  return 0;
}

int cmd_analyze(const std::vector<std::string>& logs, const std::string& out_dir) {
  std::vector<TrialMetrics> all;
  for (const auto& f : logs) all.push_back(metrics_of_log(f));
  print_table(all);
  const auto summary = summarize(all);
  print_summary(summary);
  std::filesystem::create_directories(out_dir);
  json j = {{"trials", json::array()}, {"per_setting", summary_json(summary)}};
  for (const auto& m : all) j["trials"].push_back(metrics_to_json(m));
  const auto dir = std::filesystem::path(out_dir);
  std::ofstream(dir / "metrics.json") << j.dump(2) << '\n';
  std::ofstream(dir / "metrics.csv") << metrics_csv(all);
  std::fprintf(stderr, "wrote %s and %s\n", (dir / "metrics.json").string().c_str(),
               (dir / "metrics.csv").string().c_str());
  return 0;
}

int cmd_replay(const std::string& log, double speed, bool to_bus, bool quiet) {
  std::ifstream in(log, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + log);
  if (!(speed > 0)) throw ConfigError("--speed must be positive");
  MetricsCollector collector;
  std::unique_ptr<bus::BusClient> client;
  if (to_bus) {
    client = std::make_unique<bus::BusClient>();
    client->connect("127.0.0.1", bus::server_options_from_env().bus_port);
  }
  const auto n = bus::replay(in, speed, [&](const bus::Envelope& e) {
    collector.consume(e);
    if (client) client->publish(e);
    if (!quiet) std::cout << bus::envelope_to_json(e).dump() << '\n';
  });
  std::cout.flush();
  std::fprintf(stderr, "%zu envelopes\n", n);
  print_table({collector.metrics()});
  return 0;
}

int cmd_serve(const std::string& config_file, const std::string& web_root, const std::string& bind) {
  KeyValueFile defaults = config_file.empty() ? KeyValueFile{} : KeyValueFile::load(config_file);
  if (!config_file.empty()) session_config_from(defaults);  // fail fast on a bad file
  bus::Broker broker;
  auto service = std::make_shared<LiveSessionService>(broker, defaults);
  bus::ServerOptions opts;
  opts.bind_address = bind;
  opts.web_root = web_root;
  opts = bus::server_options_from_env(opts);
  bus::BusServer server(broker, opts, service);
  server.start();
  std::printf("bus tcp %s:%u  http/ws %s:%u  (ws path /bus)\n", bind.c_str(), server.bus_port(), bind.c_str(),
              server.http_port());
  std::fflush(stdout);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service->stop();
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"tims: teleoperated intraocular microsurgery trainer"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  int repeat = 1;
  auto* run = app.add_subcommand("run", "run a scripted trial");
  run->add_option("--config,-c", config_file, "session config file")->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "override a config key (key=value)");
  run->add_option("--repeat", repeat, "trials with consecutive seeds")->check(CLI::PositiveNumber);

  std::string demo_dir = "demos", demo_name = "demo";
  int demo_count = 0;
  std::int64_t demo_seed = -1;
  bool from_bus = false;
  double seconds = 30;
  auto* rec = app.add_subcommand("demo-record", "record expert demonstrations");
  rec->add_option("--config,-c", config_file, "session config file (phantom, guide.* keys)")->check(CLI::ExistingFile);
  rec->add_option("-o,--out", demo_dir, "output directory");
  rec->add_option("--count", demo_count, "synthetic demos to write");
  rec->add_option("--seed", demo_seed, "synthetic demo seed");
  rec->add_flag("--from-bus", from_bus, "record the follower stream of a running `tims serve`");
  rec->add_option("--seconds", seconds, "recording length with --from-bus");
  rec->add_option("--name", demo_name, "demo id with --from-bus");

  std::vector<std::string> demos;
  std::string guide_out = "guide.json";
  int resample = 200;
  auto* fitc = app.add_subcommand("fit-guide", "fit a guide path to demonstrations");
  fitc->add_option("demos", demos, "demo files (JSON lines)")->required()->check(CLI::ExistingFile);
  fitc->add_option("-o,--out", guide_out, "guide path output");
  fitc->add_option("--resample", resample, "points per demo after resampling")->check(CLI::Range(2, 5000));

  std::vector<std::string> logs;
  std::string analyze_out = ".";
  auto* ana = app.add_subcommand("analyze", "metrics from session logs");
  ana->add_option("logs", logs, "session logs")->required()->check(CLI::ExistingFile);
  ana->add_option("-o,--out", analyze_out, "directory for metrics.json and metrics.csv");

  std::string replay_log;
  double speed = 1.0;
  bool to_bus = false, quiet = false;
  auto* rep = app.add_subcommand("replay", "replay a session log");
  rep->add_option("log", replay_log, "session log")->required()->check(CLI::ExistingFile);
  rep->add_option("--speed", speed, "time scale; inf for no pacing");
  rep->add_flag("--bus", to_bus, "publish into a running `tims serve`");
  rep->add_flag("--quiet,-q", quiet, "do not print envelopes");

  std::string web_root, bind = "127.0.0.1";
  auto* srv = app.add_subcommand("serve", "bus, HTTP session endpoints and console assets");
  srv->add_option("--config,-c", config_file, "defaults for started sessions")->check(CLI::ExistingFile);
  srv->add_option("--web-root", web_root, "console static assets");
  srv->add_option("--bind", bind, "listen address");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_file, overrides, repeat);
    if (*rec) return cmd_demo_record(config_file, demo_dir, demo_count, demo_seed, from_bus, seconds, demo_name);
    if (*fitc) return cmd_fit_guide(demos, guide_out, resample);
    if (*ana) return cmd_analyze(logs, analyze_out);
    if (*rep) return cmd_replay(replay_log, speed, to_bus, quiet);
    if (*srv) return cmd_serve(config_file, web_root, bind);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", e.kind().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
