#pragma once

// Scripted operators: deterministic stand-ins for human trainees.
//
// Each tick the operator aims at waypoint + aim error + compliance offset +
// tactile correction and moves the leader so the follower lands on that aim:
//   - aim error: Gaussian drift, white noise through two first-order
//     low-pass stages (pole aim_correlation), scaled to stationary std
//     sigma and starting from zero at the entry point; the noise stream does not depend on feedback, so two runs with
//     the same seed see the same noise in every setting;
//   - compliance: h <- leak * h + beta * felt_force (beta in um per N per
//     tick): the hand yields to the guidance force;
//   - tactile correction: while contact is felt during path following the
//     operator lifts the tool radially; while probing for a clot it stops
//     descending once contact is felt.

#include "tims/teleop.hpp"
#include "tims/types.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace tims {

enum class OperatorKind { kHuman, kTracker, kDeviant, kLearner };

std::string to_string(OperatorKind k);
OperatorKind operator_kind_from_string(const std::string& s);

struct OperatorConfig {
  OperatorKind kind = OperatorKind::kTracker;
  double noise_sigma_um = 400.0;
  double beta = 600.0;  // um per N per tick
  std::uint64_t seed = 42;
  double aim_correlation = 0.97;
  double compliance_leak = 0.98;
  double deviant_bias_um = 800.0;
  double learner_gamma = 0.85;
  int completed_guided_trials = 0;  // learner: sigma shrinks by gamma per trial
  double tactile_threshold = 0.2;   // felt contact when the display level reaches this
  double tactile_lift_step_um = 50.0;
  double tactile_lift_max_um = 2000.0;
  double tactile_lift_decay = 0.97;
  double probe_step_um = 10.0;

  void validate() const;
  /// Noise std actually used this trial (learner schedule applied).
  double effective_sigma() const;
};

enum class IntentMode { kTrack, kProbe };

/// What the task script asks of the operator this tick.
struct StepIntent {
  IntentMode mode = IntentMode::kTrack;
  Vec3 surface_normal = Vec3::UnitZ();  // outward, at the waypoint
  double probe_height_um = 0.0;         // kProbe: scripted height above the waypoint
  bool allow_below = false;             // kProbe: keep descending past the waypoint
  bool pedal = true;
  bool stylus = false;
};

struct OperatorFeedback {
  Vec3 follower = Vec3::Zero();     // what the operator sees, um
  Vec3 felt_force = Vec3::Zero();   // commanded haptic force, N
  double tactile_level = 0.0;       // wearable display level in [0,1]
};

class ScriptedOperator {
 public:
  ScriptedOperator(OperatorConfig cfg, MappingConfig mapping, Vec3 initial_leader_mm = Vec3::Zero());

  const OperatorConfig& config() const { return cfg_; }
  const LeaderSample& last_sample() const { return last_; }
  bool felt_contact(const OperatorFeedback& fb) const { return fb.tactile_level >= cfg_.tactile_threshold; }

  /// Reset per-episode probe state (call when a new probe starts).
  void begin_probe(double start_height_um);
  /// Height above the target the operator is currently probing at.
  double probe_height() const { return probe_height_; }
  bool probe_contact() const { return probe_contact_; }

  friend LeaderSample scripted_step(ScriptedOperator& op, const Vec3& waypoint, const OperatorFeedback& fb,
                                    const StepIntent& intent);

 private:
  OperatorConfig cfg_;
  MappingConfig mapping_;
  double sigma_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Vec3 aim_drive_ = Vec3::Zero();
  Vec3 aim_error_ = Vec3::Zero();
  Vec3 compliance_ = Vec3::Zero();
  double lift_ = 0.0;
  double last_level_ = 0.0;
  double probe_height_ = 0.0;
  bool probe_contact_ = false;
  LeaderSample last_;
};

/// One operator tick: returns the next leader sample (seq and timestamp are
/// the caller's to set).
LeaderSample scripted_step(ScriptedOperator& op, const Vec3& waypoint, const OperatorFeedback& fb,
                           const StepIntent& intent);

}  // namespace tims
