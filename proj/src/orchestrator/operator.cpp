#include "tims/orchestrator/operator.hpp"

#include <algorithm>
#include <cmath>

namespace tims {

std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::kHuman: return "human";
    case OperatorKind::kTracker: return "tracker";
    case OperatorKind::kDeviant: return "deviant";
    case OperatorKind::kLearner: return "learner";
  }
  return "tracker";
}

OperatorKind operator_kind_from_string(const std::string& s) {
  if (s == "human") return OperatorKind::kHuman;
  if (s == "tracker") return OperatorKind::kTracker;
  if (s == "deviant") return OperatorKind::kDeviant;
  if (s == "learner") return OperatorKind::kLearner;
  throw ConfigError("unknown operator kind '" + s + "' (expected human, tracker, deviant or learner)");
}

void OperatorConfig::validate() const {
  if (!(noise_sigma_um >= 0)) throw ConfigError("operator.noise_sigma_um must be >= 0");
  if (!(beta >= 0)) throw ConfigError("operator.beta must be >= 0");
  if (!(aim_correlation >= 0 && aim_correlation < 1)) throw ConfigError("operator.aim_correlation must be in [0,1)");
  if (!(compliance_leak >= 0 && compliance_leak <= 1)) throw ConfigError("operator.compliance_leak must be in [0,1]");
  if (!(learner_gamma > 0 && learner_gamma <= 1)) throw ConfigError("operator.learner_gamma must be in (0,1]");
  if (completed_guided_trials < 0) throw ConfigError("operator.completed_trials must be >= 0");
  if (!(probe_step_um > 0)) throw ConfigError("operator.probe_step_um must be > 0");
}

double OperatorConfig::effective_sigma() const {
  if (kind == OperatorKind::kLearner) return noise_sigma_um * std::pow(learner_gamma, completed_guided_trials);
  return noise_sigma_um;
}

ScriptedOperator::ScriptedOperator(OperatorConfig cfg, MappingConfig mapping, Vec3 initial_leader_mm)
    : cfg_(cfg), mapping_(mapping), sigma_(cfg.effective_sigma()), rng_(cfg.seed) {
  cfg_.validate();
  mapping_.validate();
  last_.position = initial_leader_mm;
}

void ScriptedOperator::begin_probe(double start_height_um) {
  probe_height_ = start_height_um;
  probe_contact_ = false;
}

LeaderSample scripted_step(ScriptedOperator& op, const Vec3& waypoint, const OperatorFeedback& fb,
                           const StepIntent& intent) {
  const auto& cfg = op.cfg_;
  // Two first-order stages with the same pole. For a drive with stationary
  // std sigma the output variance is c^2 sigma^2 (1 + a^2) / (1 + a)^2, so
  // c below restores std sigma at the output.
  const double a = cfg.aim_correlation;
  const double innovation = std::sqrt(1.0 - a * a) * op.sigma_;
  const double c = (1.0 + a) / std::sqrt(1.0 + a * a);
  for (int i = 0; i < 3; ++i) {
    op.aim_drive_(i) = a * op.aim_drive_(i) + innovation * op.normal_(op.rng_);
    op.aim_error_(i) = a * op.aim_error_(i) + (1.0 - a) * c * op.aim_drive_(i);
  }

  op.compliance_ = cfg.compliance_leak * op.compliance_ + cfg.beta * fb.felt_force;

  // Contact is felt while the display is at or above threshold and not
  // deflating; a deflating display reads as release.
  const bool felt = op.felt_contact(fb) && fb.tactile_level >= op.last_level_;
  op.last_level_ = fb.tactile_level;
  if (intent.mode == IntentMode::kProbe && felt) op.probe_contact_ = true;
  // While contact is felt the hand backs off radially; afterwards the
  // correction fades out.
  const bool lifting = felt && (intent.mode == IntentMode::kTrack || op.probe_contact_);
  op.lift_ = lifting ? std::min(op.lift_ + cfg.tactile_lift_step_um, cfg.tactile_lift_max_um)
                     : op.lift_ * cfg.tactile_lift_decay;
  double height = op.lift_;
  if (intent.mode == IntentMode::kProbe) {
    if (!op.probe_contact_)
      op.probe_height_ = intent.allow_below ? op.probe_height_ - cfg.probe_step_um : intent.probe_height_um;
    height += op.probe_height_;
  }

  Vec3 aim = waypoint + height * intent.surface_normal + op.aim_error_ + op.compliance_;
  if (cfg.kind == OperatorKind::kDeviant) aim += Vec3(0.0, cfg.deviant_bias_um, 0.0);

  LeaderSample next;
  next.position = op.last_.position + (aim - fb.follower) / (op.mapping_.alpha * 1000.0);
  next.pedal_engaged = intent.pedal;
  next.stylus_pressed = intent.stylus;
  next.seq = op.last_.seq + 1;
  next.timestamp_ms = op.last_.timestamp_ms;
  op.last_ = next;
  return next;
}

}  // namespace tims
