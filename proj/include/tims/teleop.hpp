#pragma once

// Leader-follower position mapping and the follower state machine.

#include "tims/types.hpp"

#include <cstdint>
#include <optional>

namespace tims {

template <typename Scalar>
struct MappingConfigT {
  Scalar alpha = Scalar(0.1);  // 1 mm leader -> 100 um follower
  Vec3T<Scalar> workspace_min = Vec3T<Scalar>::Constant(Scalar(-20000));
  Vec3T<Scalar> workspace_max = Vec3T<Scalar>::Constant(Scalar(20000));

  void validate() const {
    if (!(alpha > Scalar(0)) || !std::isfinite(double(alpha)))
      throw ConfigError("mapping.alpha must be a positive finite number");
    if (!workspace_min.allFinite() || !workspace_max.allFinite())
      throw ConfigError("mapping workspace bounds must be finite");
    if (!(workspace_min.array() < workspace_max.array()).all())
      throw ConfigError("mapping.workspace_min must be below workspace_max on every axis");
  }
};

using MappingConfig = MappingConfigT<double>;

template <typename Scalar>
struct MapResult {
  Vec3T<Scalar> position;
  bool clamped = false;
};

/// Leader mm displacement scaled by alpha and converted to um, added to the
/// previous follower position and clamped into the workspace box.
template <typename Scalar>
MapResult<Scalar> map_step(const Vec3T<Scalar>& prev_leader, const Vec3T<Scalar>& new_leader,
                           const Vec3T<Scalar>& prev_follower, const MappingConfigT<Scalar>& cfg) {
  if (!prev_leader.allFinite() || !new_leader.allFinite() || !prev_follower.allFinite())
    throw ValidationError("map_step: non-finite input position");
  const Vec3T<Scalar> raw =
      prev_follower + (cfg.alpha * Scalar(1000)) * (new_leader - prev_leader);
  MapResult<Scalar> out;
  out.position = raw.cwiseMax(cfg.workspace_min).cwiseMin(cfg.workspace_max);
  out.clamped = (out.position.array() != raw.array()).any();
  return out;
}

struct LeaderSample {
  Vec3 position = Vec3::Zero();  // leader frame, mm
  bool stylus_pressed = false;
  bool pedal_engaged = false;
  std::int64_t timestamp_ms = 0;
  std::uint64_t seq = 0;
};

struct FollowerState {
  Vec3 position = Vec3::Zero();  // um
  bool engaged = false;
  bool insertion_latched = false;
};

enum class SeqEventKind { kOutOfOrder, kGap };

/// Emitted when a sample does not directly follow the previous one.
struct SeqEvent {
  SeqEventKind kind;
  std::uint64_t expected;
  std::uint64_t received;
};

struct ApplyResult {
  FollowerState state;
  bool applied = true;
  bool clamped = false;
  std::optional<SeqEvent> event;
};

/// Advance the follower by one leader sample.
///
/// A sample whose seq is not above `prev_sample.seq` is dropped and reported
/// as out-of-order. A sample that skips seqs is applied against `prev_sample`
/// (the increment telescopes over the missing ones) and reported as a gap.
/// With the pedal released the follower is frozen. The insertion latch is set
/// on a rising stylus edge and stays set until the consumer clears it.
inline ApplyResult apply_sample(const FollowerState& state, const LeaderSample& sample,
                                const LeaderSample& prev_sample, const MappingConfig& cfg) {
  ApplyResult out;
  out.state = state;
  if (sample.seq <= prev_sample.seq) {
    out.applied = false;
    out.event = SeqEvent{SeqEventKind::kOutOfOrder, prev_sample.seq + 1, sample.seq};
    return out;
  }
  if (sample.seq != prev_sample.seq + 1)
    out.event = SeqEvent{SeqEventKind::kGap, prev_sample.seq + 1, sample.seq};

  out.state.engaged = sample.pedal_engaged;
  if (sample.pedal_engaged) {
    const auto mapped = map_step(prev_sample.position, sample.position, state.position, cfg);
    out.state.position = mapped.position;
    out.clamped = mapped.clamped;
  } else if (!sample.position.allFinite()) {
    throw ValidationError("apply_sample: non-finite leader position");
  }
  if (sample.stylus_pressed && !prev_sample.stylus_pressed) out.state.insertion_latched = true;
  return out;
}

}  // namespace tims
