#include "tims/orchestrator/engine.hpp"

namespace tims {

using bus::json;

namespace {

json arr(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

TrialEngine::TrialEngine(const SessionConfig& cfg, const TrialInputs& inputs, bus::Broker& broker,
                         const LeaderSample& initial_leader, bool publish_leader)
    : cfg_(cfg), guide_(inputs.guide), broker_(broker), publish_leader_(publish_leader) {
  cfg_.validate();
  if (guide_.empty()) throw ConfigError("guide path is empty");
  inputs.phantom.validate();
  scene_.phantom = inputs.phantom;
  safety_ = cfg_.safety;
  safety_.surface = inputs.phantom.sphere;
  follower_.position = guide_.points.front();
  prev_sample_ = initial_leader;
  for (const char* d : {"event", "guide", "leader", "follower", "scene", "wtd", "haptic"})
    if (const auto latest = broker_.latest(d)) seq_[d] = latest->seq;
}

void TrialEngine::emit(const std::string& device, json payload, std::int64_t t_ms) {
  bus::Envelope env;
  env.device_id = device;
  env.seq = ++seq_[device];
  env.timestamp_ms = t_ms;
  env.payload = std::move(payload);
  broker_.publish(env);
}

void TrialEngine::event(json payload, std::int64_t t_ms) { emit("event", std::move(payload), t_ms); }

void TrialEngine::begin(std::int64_t t_ms) {
  event({{"kind", "session_start"}, {"trial_id", cfg_.trial_id}, {"setting", to_string(cfg_.setting)},
         {"operator", to_string(cfg_.op.kind)}, {"config_hash", cfg_.hash()}},
        t_ms);
  json points = json::array(), ci = json::array();
  for (std::size_t i = 0; i < guide_.size(); ++i) {
    points.push_back(arr(guide_.points[i]));
    ci.push_back(i < guide_.ci_halfwidth.size() ? arr(guide_.ci_halfwidth[i]) : arr(Vec3::Zero()));
  }
  emit("guide", {{"points", std::move(points)}, {"ci", std::move(ci)}}, t_ms);
  last_ms_ = t_ms;
}

void TrialEngine::phase(const std::string& name, std::int64_t t_ms) {
  event({{"kind", "phase"}, {"phase", name}}, t_ms);
}

void TrialEngine::complete(std::int64_t t_ms) {
  event({{"kind", "complete"}, {"reminders", reminders_.count()}}, t_ms);
}

bool TrialEngine::targets_done() const {
  for (const auto& c : scene_.phantom.clots)
    if (!c.punctured) return false;
  return true;
}

TickOutput TrialEngine::tick(const std::optional<LeaderSample>& sample, std::int64_t t_ms) {
  TickOutput out;
  const std::int64_t dt = std::max<std::int64_t>(1, t_ms - last_ms_);
  last_ms_ = t_ms;

  if (sample) {
    if (publish_leader_)
      emit("leader", {{"pos_mm", arr(sample->position)}, {"stylus", sample->stylus_pressed},
                      {"pedal", sample->pedal_engaged}},
           t_ms);
    const auto applied = apply_sample(follower_, *sample, prev_sample_, cfg_.mapping);
    if (applied.event) {
      const bool gap = applied.event->kind == SeqEventKind::kGap;
      event({{"kind", gap ? "seq_gap" : "seq_drop"}, {"expected", applied.event->expected},
             {"received", applied.event->received}},
            t_ms);
    }
    if (applied.applied) {
      follower_ = applied.state;
      prev_sample_ = *sample;
    }
    out.clamped = applied.clamped;
  }

  if (follower_.insertion_latched) {
    follower_.insertion_latched = false;
    if (!targets_done()) {
      const auto r = attempt_insertion(follower_.position, scene_.phantom);
      const auto& clot = scene_.phantom.clots[r.target];
      event({{"kind", "insertion"}, {"target", r.target}, {"tip_um", arr(follower_.position)},
             {"target_um", arr(clot.position)}, {"miss_um", r.miss_distance}, {"hit", r.hit.has_value()}},
            t_ms);
      out.insertion = r;
    }
  }
  out.follower = follower_;
  emit("follower", {{"pos_um", arr(follower_.position)}, {"engaged", follower_.engaged},
                    {"insertion_latched", follower_.insertion_latched}, {"clamped", out.clamped}},
       t_ms);

  out.scene = step_scene(scene_, follower_.position, dt);
  json clots = json::array();
  for (bool b : out.scene.clot_states) clots.push_back(b);
  emit("scene", {{"tip_um", arr(out.scene.tool_tip)}, {"touching", out.scene.contact.touching},
                 {"penetration_um", out.scene.contact.penetration},
                 {"contact_point_um", arr(out.scene.contact.contact_point)}, {"clots", std::move(clots)},
                 {"frame_seq", out.scene.frame_seq}},
       t_ms);

  // NF/HG: the display is never driven and stays at rest.
  const bool touching = tactile_active(cfg_.setting) && out.scene.contact.touching;
  tactile_ = update_tactile(tactile_, touching, static_cast<double>(dt), cfg_.tactile);
  tactile_.timestamp_ms = t_ms;
  out.tactile = tactile_;
  json levels = json::array();
  for (double a : tactile_.actuators) levels.push_back(a);
  emit("wtd", {{"levels", std::move(levels)}, {"commanded", tactile_.commanded}}, t_ms);

  // Forces are always computed so logs stay comparable across settings;
  // NF/TF zero them at the output.
  out.guidance = guidance_force(follower_.position, guide_.points, cfg_.guidance, cursor_);
  if (cfg_.guidance.progress_mode == ProgressMode::kMonotone) cursor_ = out.guidance.nearest_index;
  out.fixture = fixture_force(follower_.position, safety_);
  reminders_.update(out.fixture.violated);
  const bool active = guidance_active(cfg_.setting);
  out.force = active ? total_force(out.guidance.force, out.fixture.force, cfg_.guidance.max_force) : Vec3::Zero();
  emit("haptic", {{"force_n", arr(out.force)}, {"guidance_n", arr(out.guidance.force)},
                  {"fixture_n", arr(out.fixture.force)}, {"nearest_index", out.guidance.nearest_index},
                  {"deviation_um", out.guidance.deviation}, {"violated", out.fixture.violated},
                  {"output_active", active}},
       t_ms);
  last_ = out;
  return out;
}

}  // namespace tims
