#pragma once

// One trial's control loop body. Each tick runs, in order:
//   leader sample -> mapping -> scene/contact -> tactile -> guidance+fixture
// and publishes every stage on the bus. Scripted runs and live sessions
// both drive this class; only the source of leader samples differs.

#include "tims/bus/broker.hpp"
#include "tims/guidance.hpp"
#include "tims/orchestrator/config.hpp"
#include "tims/phantom.hpp"
#include "tims/tactile.hpp"
#include "tims/teleop.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace tims {

/// Everything a trial needs that is derived from files or synthesis. Built
/// up front so configuration problems abort before the first tick.
struct TrialInputs {
  Phantom phantom;
  GuidePath guide;
  std::optional<std::array<GprHyperparams, 3>> hyper;
};

struct TickOutput {
  FollowerState follower;
  bool clamped = false;
  SceneFrame scene;
  TactileFrame tactile;
  Vec3 force = Vec3::Zero();  // what reaches the haptic device
  ForceCommand guidance;      // before output gating
  FixtureResult fixture;
  std::optional<InsertionResult> insertion;
};

class TrialEngine {
 public:
  /// `initial_leader` is the sample the first one is applied against.
  /// `publish_leader`: false when leader samples already arrive via the bus.
  /// Envelope seqs continue from whatever the broker already holds.
  TrialEngine(const SessionConfig& cfg, const TrialInputs& inputs, bus::Broker& broker,
              const LeaderSample& initial_leader = {}, bool publish_leader = true);

  /// session_start + guide envelopes.
  void begin(std::int64_t t_ms);
  void phase(const std::string& name, std::int64_t t_ms);
  void complete(std::int64_t t_ms);

  /// Advance one tick. Without a new sample the follower holds.
  TickOutput tick(const std::optional<LeaderSample>& sample, std::int64_t t_ms);

  const FollowerState& follower() const { return follower_; }
  const Phantom& phantom() const { return scene_.phantom; }
  const GuidePath& guide() const { return guide_; }
  const TickOutput& last() const { return last_; }
  const LeaderSample& last_sample() const { return prev_sample_; }
  bool targets_done() const;
  int reminders() const { return reminders_.count(); }

 private:
  void emit(const std::string& device, bus::json payload, std::int64_t t_ms);
  void event(bus::json payload, std::int64_t t_ms);

  SessionConfig cfg_;
  GuidePath guide_;
  bus::Broker& broker_;
  bool publish_leader_;
  std::map<std::string, std::uint64_t> seq_;
  SceneState scene_;
  FollowerState follower_;
  LeaderSample prev_sample_;
  TactileFrame tactile_;
  SafetyBoundary safety_;
  ReminderCounter reminders_;
  std::size_t cursor_ = 0;
  std::int64_t last_ms_ = 0;
  TickOutput last_;
};

}  // namespace tims
