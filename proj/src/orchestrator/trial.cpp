#include "tims/orchestrator/trial.hpp"

#include "tims/lfd_io.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace tims {

using bus::json;

namespace {

Vec3 lifted_vessel_point(const Phantom& ph, double s, double clearance) {
  const double x = std::clamp(s, 0.0, 1.0) * double(ph.vessel.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(x), ph.vessel.size() - 2);
  const double u = x - double(i);
  const Vec3 p = ph.vessel[i] + u * (ph.vessel[i + 1] - ph.vessel[i]);
  const Vec3 r = p - ph.sphere.center;
  return ph.sphere.center + (ph.sphere.radius + clearance) * r.normalized();
}

Vec3 outward(const Phantom& ph, const Vec3& p) { return (p - ph.sphere.center).normalized(); }

}  // namespace

std::vector<Demonstration> synthesize_expert_demos(const Phantom& phantom, const GuideSource& src) {
  if (phantom.vessel.size() < 2) throw ConfigError("phantom vessel needs at least 2 points");
  std::mt19937_64 rng(src.demo_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Demonstration> demos;
  for (int d = 0; d < src.demo_count; ++d) {
    const int samples = 120 + static_cast<int>(uniform(rng) * 200.0);
    const double rho = 0.95;
    const double innov = std::sqrt(1.0 - rho * rho) * src.demo_noise_um;
    Vec3 tremor(normal(rng), normal(rng), normal(rng));
    tremor *= src.demo_noise_um;
    // Uneven pace: the expert slows down and speeds up along the vessel.
    const double wobble = 0.3 * uniform(rng);
    const double phase = 6.283185307179586 * uniform(rng);
    Demonstration demo;
    demo.source_id = "expert-" + std::to_string(d);
    for (int k = 0; k < samples; ++k) {
      const double u = double(k) / double(samples - 1);
      const double s = u + wobble * std::sin(6.283185307179586 * u + phase) * u * (1.0 - u);
      for (int a = 0; a < 3; ++a) tremor(a) = rho * tremor(a) + innov * normal(rng);
      const Vec3 p = lifted_vessel_point(phantom, s, src.clearance_um) + tremor;
      demo.points.push_back(p);
      if (uniform(rng) < 0.05) demo.points.push_back(p);  // stalled sample
    }
    demos.push_back(std::move(demo));
  }
  return demos;
}

TrialInputs prepare_inputs(const SessionConfig& cfg) {
  cfg.validate();
  TrialInputs in;
  in.phantom = cfg.phantom_file.empty() ? default_phantom() : load_phantom(cfg.phantom_file);
  in.phantom.validate();
  if (in.phantom.clots.empty()) throw ConfigError("phantom has no clots to insert");
  if (!cfg.guide.file.empty()) {
    try {
      in.guide = read_guide_path(cfg.guide.file);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("guide file " + cfg.guide.file.string() + ": " + e.what());
    }
    if (in.guide.size() < 2) throw ConfigError("guide path needs at least 2 points");
    return in;
  }
  DemonstrationSet set;
  set.resample_count = cfg.guide.resample_count;
  for (const auto& d : synthesize_expert_demos(in.phantom, cfg.guide))
    set.demos.push_back(preprocess(d.points, set.resample_count, d.source_id));
  auto result = fit(set);
  in.guide = std::move(result.guide);
  in.hyper = {result.model.axis(0).hyper(), result.model.axis(1).hyper(), result.model.axis(2).hyper()};
  return in;
}

std::string session_id_for(const SessionConfig& cfg) {
  if (!cfg.trial_id.empty()) return cfg.trial_id;
  return to_string(cfg.setting) + "-" + to_string(cfg.op.kind) + "-s" + std::to_string(cfg.op.seed) + "-" +
         cfg.hash().substr(0, 8);
}

void run_task_script(const SessionConfig& cfg, TrialEngine& engine, ScriptedOperator& op, const TickHook& hook) {
  const std::int64_t dt = std::max<std::int64_t>(1, std::llround(1000.0 / cfg.tick_hz));
  const auto& guide = engine.guide();
  const Phantom& ph = engine.phantom();
  std::int64_t t = 0;
  bool aborted = false;

  const auto step = [&](const Vec3& waypoint, const StepIntent& intent) {
    if (aborted) return;
    t += dt;
    if (hook && !hook(t)) {
      aborted = true;
      return;
    }
    const auto& last = engine.last();
    OperatorFeedback fb{engine.follower().position, last.force, last.tactile.level()};
    LeaderSample s = scripted_step(op, waypoint, fb, intent);
    s.timestamp_ms = t;
    engine.tick(s, t);
  };

  engine.begin(t);
  engine.phase("follow", t);
  const int tpi = cfg.task.ticks_per_index;
  const std::size_t n = guide.size();
  // The operator is handed the guide points themselves, one every tpi
  // ticks; interpolated targets would sit up to half a spacing away from
  // every guide point and bias the nearest-point RMSE.
  Vec3 waypoint = guide.points.front();
  for (std::size_t i = 1; i < n && !aborted; ++i) {
    waypoint = guide.points[i];
    for (int k = 0; k < tpi; ++k) step(waypoint, {IntentMode::kTrack, outward(ph, waypoint)});
  }

  engine.phase("insert", t);
  const bool tactile = tactile_active(cfg.setting);
  const double clearance = cfg.guide.clearance_um;
  for (std::size_t c = 0; c < ph.clots.size() && !aborted; ++c) {
    const Vec3 target = ph.clots[c].position;
    const Vec3 normal = outward(ph, target);
    const Vec3 hover = target + clearance * normal;

    // Travel over the eye, not through it: a straight chord between two
    // far points on the sphere dips below the surface.
    const Vec3 from = waypoint;
    const Vec3& center = ph.sphere.center;
    const double r0 = (from - center).norm(), r1 = (hover - center).norm();
    for (int k = 1; k <= cfg.task.approach_ticks; ++k) {
      const double u = double(k) / cfg.task.approach_ticks;
      const Vec3 chord = from + u * (hover - from) - center;
      waypoint = chord.norm() > 0 ? Vec3(center + ((1 - u) * r0 + u * r1) * chord.normalized()) : hover;
      step(waypoint, {IntentMode::kTrack, outward(ph, waypoint)});
    }

    op.begin_probe(clearance);
    StepIntent probe{IntentMode::kProbe, normal};
    for (int k = 1; k <= cfg.task.descent_ticks && !op.probe_contact(); ++k) {
      probe.probe_height_um = clearance * (1.0 - double(k) / cfg.task.descent_ticks);
      step(target, probe);
    }
    if (tactile) {
      // Keep feeling for the surface, then press shortly after contact.
      probe.allow_below = true;
      for (int k = 0; k < cfg.task.max_probe_ticks && !op.probe_contact(); ++k) step(target, probe);
      probe.allow_below = false;
      probe.probe_height_um = op.probe_height();
      for (int k = 0; k < cfg.task.contact_press_ticks; ++k) step(target, probe);
    } else {
      probe.probe_height_um = 0.0;
      for (int k = 0; k < cfg.task.dwell_ticks; ++k) step(target, probe);
    }
    probe.stylus = true;
    step(target, probe);

    waypoint = hover;
    for (int k = 0; k < cfg.task.lift_ticks; ++k) step(hover, {IntentMode::kTrack, normal});
  }
  if (!aborted) engine.complete(t);
}

TrialResult run_trial(const SessionConfig& cfg) { return run_trial(cfg, prepare_inputs(cfg)); }

TrialResult run_trial(const SessionConfig& in_cfg, const TrialInputs& inputs) {
  SessionConfig cfg = in_cfg;
  cfg.validate();
  if (cfg.op.kind == OperatorKind::kHuman)
    throw ConfigError("human operators run through `tims serve`; run_trial needs a scripted operator");
  const std::string session_id = session_id_for(cfg);
  if (cfg.trial_id.empty()) cfg.trial_id = session_id;

  auto clock = std::make_shared<bus::ManualClock>();
  bus::Broker broker(clock);
  bus::LogHeader header{session_id, cfg.hash(),
                        {{"setting", to_string(cfg.setting)}, {"operator", to_string(cfg.op.kind)},
                         {"seed", cfg.op.seed}, {"trial_id", cfg.trial_id}}};
  auto recorder = std::make_shared<bus::MemoryRecorder>(header);
  broker.add_sink(recorder);
  MetricsCollector collector;
  broker.subscribe_callback(bus::Broker::kAllDevices, [&](const bus::Envelope& e) { collector.consume(e); });

  TrialEngine engine(cfg, inputs, broker);
  ScriptedOperator op(cfg.op, cfg.mapping, Vec3::Zero());
  run_task_script(cfg, engine, op, [&](std::int64_t t) {
    clock->set(t);
    return true;
  });

  TrialResult result;
  result.log = recorder->log();
  result.metrics = collector.metrics();
  if (!cfg.log_dir.empty()) {
    std::filesystem::create_directories(cfg.log_dir);
    result.log_file = cfg.log_dir / (session_id + ".jsonl");
    std::ofstream out(result.log_file, std::ios::binary);
    if (!out) throw Error("io", "cannot write session log " + result.log_file.string());
    bus::write_session_log(out, result.log);
    std::ofstream m(cfg.log_dir / (session_id + ".metrics.json"));
    m << metrics_to_json(result.metrics).dump(2) << '\n';
  }
  return result;
}

std::vector<TrialMetrics> run_learner_series(const SessionConfig& base, const TrialInputs& inputs, int trials) {
  std::vector<TrialMetrics> out;
  for (int k = 0; k < trials; ++k) {
    SessionConfig cfg = base;
    cfg.op.kind = OperatorKind::kLearner;
    cfg.op.completed_guided_trials = base.op.completed_guided_trials + k;
    cfg.op.seed = base.op.seed + static_cast<std::uint64_t>(k);
    cfg.trial_id = "learner-" + std::to_string(k + 1);
    out.push_back(run_trial(cfg, inputs).metrics);
  }
  return out;
}

}  // namespace tims
