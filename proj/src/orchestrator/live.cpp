#include "tims/orchestrator/live.hpp"

#include "tims/analytics.hpp"
#include "tims/bus/session_log.hpp"
#include "tims/orchestrator/trial.hpp"

#include <chrono>
#include <fstream>

namespace tims {

using bus::json;

std::string config_literal(const json& value) {
  if (value.is_string()) return "\"" + value.get<std::string>() + "\"";
  if (value.is_boolean() || value.is_number() || value.is_array()) return value.dump();
  throw ConfigError("config values must be strings, numbers, booleans or [x, y, z] arrays");
}

struct LiveSessionService::Run {
  SessionConfig cfg;
  std::string session_id;
  std::atomic<bool> stop{false};
  std::atomic<bool> running{true};
  std::atomic<std::int64_t> t_ms{0};
  std::mutex mu;
  MetricsCollector collector;
  bool accepting = false;
  std::string error;
  std::shared_ptr<bus::Subscriber> tap;
  std::shared_ptr<bus::SessionRecorder> recorder;
  std::ofstream log;
  std::filesystem::path log_file;
  std::thread worker;
};

LiveSessionService::LiveSessionService(bus::Broker& broker, KeyValueFile defaults)
    : broker_(broker), defaults_(std::move(defaults)) {}

LiveSessionService::~LiveSessionService() {
  std::lock_guard lock(mu_);
  if (run_) run_->stop = true;
  finish_locked();
}

void LiveSessionService::finish_locked() {
  if (!run_) return;
  if (run_->worker.joinable()) run_->worker.join();
  if (run_->tap) {
    broker_.unsubscribe(run_->tap);
    run_->tap.reset();
  }
  if (run_->recorder) {
    broker_.remove_sink(run_->recorder);
    run_->recorder.reset();
    run_->log.flush();
  }
}

json LiveSessionService::start(const json& request) {
  KeyValueFile kv = defaults_;
  const json& overrides = request.contains("config") ? request.at("config") : request;
  if (!overrides.is_object()) throw ConfigError("start request: config must be an object");
  for (const auto& [key, value] : overrides.items()) kv.set(key, config_literal(value));
  SessionConfig cfg = session_config_from(kv);
  if (cfg.log_dir.empty())
    if (const char* env = std::getenv("TIMS_LOG_DIR"); env && *env) cfg.log_dir = env;

  std::lock_guard lock(mu_);
  if (run_ && run_->running) throw Error("busy", "a session is already running; stop it first");
  finish_locked();

  // Everything that can fail for configuration reasons happens here.
  const TrialInputs inputs = prepare_inputs(cfg);
  auto run = std::make_shared<Run>();
  run->session_id = session_id_for(cfg);
  if (cfg.trial_id.empty()) cfg.trial_id = run->session_id;
  run->cfg = cfg;
  if (!cfg.log_dir.empty()) {
    std::filesystem::create_directories(cfg.log_dir);
    run->log_file = cfg.log_dir / (run->session_id + ".jsonl");
    run->log.open(run->log_file, std::ios::binary);
    if (!run->log) throw Error("io", "cannot write session log " + run->log_file.string());
    bus::LogHeader header{run->session_id, cfg.hash(),
                          {{"setting", to_string(cfg.setting)}, {"operator", to_string(cfg.op.kind)},
                           {"seed", cfg.op.seed}, {"trial_id", cfg.trial_id}}};
    run->recorder = std::make_shared<bus::SessionRecorder>(run->log, header);
    broker_.add_sink(run->recorder);
  }
  Run* r = run.get();
  run->tap = broker_.subscribe_callback(bus::Broker::kAllDevices, [r](const bus::Envelope& e) {
    std::lock_guard l(r->mu);
    if (r->accepting) r->collector.consume(e);
  });
  {
    // Drop the stored latest values replayed to the new subscription.
    std::lock_guard l(run->mu);
    run->collector = {};
    run->accepting = true;
  }

  run->worker = std::thread([this, r, inputs, cfg] {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto pace = [&](std::int64_t t) {
      std::this_thread::sleep_until(t0 + std::chrono::milliseconds(t));
      r->t_ms = t;
      return !r->stop.load();
    };
    try {
      if (cfg.op.kind == OperatorKind::kHuman) {
        LeaderSample initial;
        if (const auto env = broker_.latest("leader")) {
          const auto& p = env->payload;
          initial.position = Vec3(p.at("pos_mm")[0].get<double>(), p.at("pos_mm")[1].get<double>(),
                                  p.at("pos_mm")[2].get<double>());
          initial.pedal_engaged = p.value("pedal", false);
          initial.stylus_pressed = p.value("stylus", false);
          initial.seq = env->seq;
        }
        TrialEngine engine(cfg, inputs, broker_, initial, false);
        const std::int64_t dt = std::max<std::int64_t>(1, std::llround(1000.0 / cfg.tick_hz));
        std::int64_t t = 0;
        engine.begin(t);
        engine.phase("follow", t);
        bool following = true;
        while (!engine.targets_done()) {
          t += dt;
          if (!pace(t)) break;
          std::optional<LeaderSample> sample;
          if (const auto env = broker_.latest("leader"); env && env->seq > engine.last_sample().seq) {
            const auto& p = env->payload;
            LeaderSample s;
            s.position = Vec3(p.at("pos_mm")[0].get<double>(), p.at("pos_mm")[1].get<double>(),
                              p.at("pos_mm")[2].get<double>());
            s.pedal_engaged = p.value("pedal", false);
            s.stylus_pressed = p.value("stylus", false);
            s.seq = env->seq;
            s.timestamp_ms = env->timestamp_ms;
            sample = s;
          }
          const auto out = engine.tick(sample, t);
          if (following && out.guidance.nearest_index + 1 >= engine.guide().size()) {
            following = false;
            engine.phase("insert", t);
          }
        }
        engine.complete(t);
      } else {
        TrialEngine engine(cfg, inputs, broker_);
        ScriptedOperator op(cfg.op, cfg.mapping);
        run_task_script(cfg, engine, op, pace);
      }
    } catch (const std::exception& e) {
      std::lock_guard l(r->mu);
      r->error = e.what();
    }
    r->running = false;
  });
  run_ = run;
  return describe(*run_);
}

json LiveSessionService::describe(Run& run) {
  std::lock_guard l(run.mu);
  json j = {{"state", run.running ? "running" : (run.error.empty() ? "finished" : "error")},
            {"session_id", run.session_id},
            {"setting", to_string(run.cfg.setting)},
            {"operator", to_string(run.cfg.op.kind)},
            {"t_ms", run.t_ms.load()}};
  if (!run.error.empty()) j["error"] = run.error;
  if (!run.log_file.empty()) j["log_file"] = run.log_file.string();
  return j;
}

json LiveSessionService::stop() {
  std::lock_guard lock(mu_);
  if (!run_) return {{"state", "idle"}};
  run_->stop = true;
  finish_locked();
  return describe(*run_);
}

json LiveSessionService::state() {
  std::lock_guard lock(mu_);
  if (!run_) return {{"state", "idle"}};
  return describe(*run_);
}

json LiveSessionService::metrics() {
  std::lock_guard lock(mu_);
  if (!run_) return json::object();
  std::lock_guard l(run_->mu);
  return metrics_to_json(run_->collector.metrics());
}

void LiveSessionService::wait() {
  std::shared_ptr<Run> run;
  {
    std::lock_guard lock(mu_);
    run = run_;
  }
  while (run && run->running) std::this_thread::sleep_for(std::chrono::milliseconds(10));
}

}  // namespace tims
